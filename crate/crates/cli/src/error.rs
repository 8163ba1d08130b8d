//! One error shape for the CLI and the service: `{code, message, entity}`.

use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed request or input file.
    BadInput,
    NotFound,
    /// Well-formed input that the domain rejects.
    Domain,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    pub entity: Option<String>,
    #[serde(skip)]
    pub kind: ErrorKind,
}

impl ApiError {
    pub fn new(kind: ErrorKind, code: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            code: code.into(),
            message: message.into(),
            entity: None,
            kind,
        }
    }

    pub fn bad_input(code: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::BadInput, code, message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(ErrorKind::NotFound, "NotFound", format!("{what} `{id}` does not exist"))
            .on(format!("{what}:{id}"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Internal, "Internal", message)
    }

    /// A domain error; the code is the error's variant name.
    pub fn domain<E: fmt::Debug + fmt::Display>(err: &E) -> Self {
        Self::new(ErrorKind::Domain, variant_name(err), err.to_string())
    }

    pub fn on(mut self, entity: impl Into<String>) -> Self {
        self.entity = Some(entity.into());
        self
    }

    pub fn http_status(&self) -> u16 {
        match self.kind {
            ErrorKind::BadInput => 400,
            ErrorKind::NotFound => 404,
            ErrorKind::Domain => 422,
            ErrorKind::Internal => 500,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("errors serialize")
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::internal(e.to_string())
    }
}

/// Leading identifier of a derived `Debug` rendering, which for enums is
/// the variant name.
pub fn variant_name<E: fmt::Debug>(err: &E) -> String {
    let text = format!("{err:?}");
    text.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect()
}
