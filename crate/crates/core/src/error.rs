use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("format error in {path}: expected magic {expected:#010x}, found {found:#010x}")]
    Magic {
        path: String,
        expected: u32,
        found: u32,
    },

    #[error("length error in {path}: header promises {expected} bytes, file has {found}")]
    Length {
        path: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("inner loop diverged: step norm {norm:.3e} exceeds bound {bound:.3e}")]
    Divergence { norm: f64, bound: f64 },

    #[error("refusing to overwrite {0}: existing record differs")]
    Overwrite(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("cannot read {path}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            expected,
            found,
        })
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })
}
