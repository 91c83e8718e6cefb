use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use closed_coherence::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const OTHER: u8 = 1;
    pub const PARSE: u8 = 2;
    pub const CAPACITY: u8 = 3;
    pub const INSUFFICIENT_DATA: u8 = 4;
    pub const IO: u8 = 5;
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Parse { .. }) => exit::PARSE,
            CliError::Core(Error::Capacity(_)) => exit::CAPACITY,
            CliError::Core(Error::InsufficientData { .. }) => exit::INSUFFICIENT_DATA,
            CliError::Core(Error::Io(_)) | CliError::Io { .. } => exit::IO,
            CliError::Core(_) => exit::OTHER,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Ordered `key: value` pairs written as `#` comment lines.
#[derive(Clone, Debug, Default)]
pub struct Provenance(pub Vec<(String, String)>);

impl Provenance {
    pub fn new(command: &str) -> Self {
        let mut p = Provenance::default();
        p.push("tool", format!("coherence {}", env!("CARGO_PKG_VERSION")));
        p.push("command", command);
        p
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }
}

/// Write via a temporary file in the target directory, then rename over
/// `path`. Without a path the content goes to stdout.
pub fn emit<F>(path: Option<&Path>, body: F) -> CliResult<()>
where
    F: FnOnce(&mut dyn Write) -> closed_coherence::Result<()>,
{
    match path {
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
            lock.flush().map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
        Some(path) => write_atomic(path, body),
    }
}

pub fn write_atomic<F>(path: &Path, body: F) -> CliResult<()>
where
    F: FnOnce(&mut dyn Write) -> closed_coherence::Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn open_input(path: &Path) -> CliResult<io::BufReader<fs::File>> {
    fs::File::open(path)
        .map(io::BufReader::new)
        .map_err(|e| CliError::io(path, e))
}
