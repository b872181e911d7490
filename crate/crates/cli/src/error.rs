use genbench::datastore::DatastoreError;
use genbench::interpolant::InterpolantError;
use genbench::metrics::MetricsError;
use genbench::preprocess::PreprocessError;
use genbench::ErrorClass;

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Data,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        exit_code(self.class)
    }

    pub fn class_name(&self) -> &'static str {
        match self.class {
            ErrorClass::Usage => "usage",
            ErrorClass::Data => "data",
            ErrorClass::Numeric => "numeric",
        }
    }

    /// One-line JSON record for standard error.
    pub fn to_json(&self, command: &str) -> String {
        serde_json::json!({
            "error": {
                "class": self.class_name(),
                "exit_code": self.exit_code(),
                "command": command,
                "message": self.message,
            }
        })
        .to_string()
    }

    pub fn context(self, what: impl std::fmt::Display) -> Self {
        Self {
            class: self.class,
            message: format!("{what}: {}", self.message),
        }
    }
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Usage => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numeric => 4,
    }
}

macro_rules! classified {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self { class: e.class(), message: e.to_string() }
            }
        }
    )*};
}

classified!(
    DatastoreError,
    MetricsError,
    PreprocessError,
    InterpolantError
);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        Self::usage(format!("config: {}", e.message()))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(format!("json: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
