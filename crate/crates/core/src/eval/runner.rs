use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

pub const DEFAULT_TIMEOUT_SECONDS: u64 = 30;

/// How to run a solver: `command[0]` is the executable, the rest are fixed
/// arguments; the input path is appended as the final argument.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub command: Vec<String>,
    pub timeout_seconds: u64,
    /// Parent directory for the per-invocation scratch directories; the
    /// system temp dir when absent.
    pub working_dir: Option<PathBuf>,
}

impl SolverSpec {
    pub fn new(command: Vec<String>) -> Self {
        SolverSpec {
            command,
            timeout_seconds: DEFAULT_TIMEOUT_SECONDS,
            working_dir: None,
        }
    }

    /// Splits a shell-style command line (quotes respected, no expansion).
    pub fn from_command_line(line: &str) -> Result<Self, String> {
        let words = shlex::split(line).ok_or_else(|| format!("cannot split command `{line}`"))?;
        if words.is_empty() {
            return Err("solver command is empty".into());
        }
        Ok(SolverSpec::new(words))
    }

    pub fn with_timeout(mut self, seconds: u64) -> Self {
        self.timeout_seconds = seconds;
        self
    }

    /// Resolves the executable the way `Command` would: paths containing a
    /// separator as given, bare names through `PATH`.
    pub fn resolve_executable(&self) -> Option<PathBuf> {
        let program = self.command.first()?;
        if program.is_empty() {
            return None;
        }
        let as_path = Path::new(program);
        if as_path.components().count() > 1 {
            return is_executable(as_path).then(|| as_path.to_owned());
        }
        std::env::var_os("PATH").and_then(|paths| {
            std::env::split_paths(&paths)
                .map(|dir| dir.join(program))
                .find(|p| is_executable(p))
        })
    }
}

#[cfg(unix)]
fn is_executable(path: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    path.metadata()
        .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
        .unwrap_or(false)
}

#[cfg(not(unix))]
fn is_executable(path: &Path) -> bool {
    path.is_file()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SolverFailure {
    #[error("solver exited with {}", exit_code.map_or("a signal".to_string(), |c| format!("code {c}")))]
    Crash {
        exit_code: Option<i32>,
        stderr: String,
    },
    #[error("solver exceeded {seconds}s")]
    Timeout { seconds: u64 },
    #[error("solver produced no output")]
    Empty,
    #[error("solver could not be started: {message}")]
    Spawn { message: String },
}

impl SolverFailure {
    pub fn kind(&self) -> &'static str {
        match self {
            SolverFailure::Crash { .. } => "crash",
            SolverFailure::Timeout { .. } => "timeout",
            SolverFailure::Empty => "empty",
            SolverFailure::Spawn { .. } => "spawn",
        }
    }
}

const STDERR_KEEP: usize = 2000;

/// Runs the solver on one input file in a fresh scratch directory and
/// returns its standard output.
pub fn run_solver(spec: &SolverSpec, input_path: &Path) -> Result<String, SolverFailure> {
    let spawn_err = |message: String| SolverFailure::Spawn { message };
    let (program, args) = spec
        .command
        .split_first()
        .ok_or_else(|| spawn_err("empty command".into()))?;
    let input = std::path::absolute(input_path).map_err(|e| spawn_err(e.to_string()))?;
    let scratch = match &spec.working_dir {
        Some(dir) => tempfile::TempDir::new_in(dir),
        None => tempfile::TempDir::new(),
    }
    .map_err(|e| spawn_err(format!("scratch directory: {e}")))?;

    let mut cmd = Command::new(program);
    cmd.args(args)
        .arg(&input)
        .current_dir(scratch.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let mut child = cmd
        .spawn()
        .map_err(|e| spawn_err(format!("{program}: {e}")))?;

    let mut stdout = child.stdout.take().expect("piped");
    let mut stderr = child.stderr.take().expect("piped");
    let out_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });

    let status = child
        .wait_timeout(Duration::from_secs(spec.timeout_seconds))
        .map_err(|e| spawn_err(e.to_string()))?;
    let Some(status) = status else {
        kill_tree(&mut child);
        let _ = child.wait();
        let _ = out_reader.join();
        let _ = err_reader.join();
        return Err(SolverFailure::Timeout {
            seconds: spec.timeout_seconds,
        });
    };
    let out = out_reader.join().unwrap_or_default();
    let err = err_reader.join().unwrap_or_default();
    if !status.success() {
        let mut stderr = String::from_utf8_lossy(&err).into_owned();
        if stderr.len() > STDERR_KEEP {
            let cut = (0..=STDERR_KEEP)
                .rev()
                .find(|&i| stderr.is_char_boundary(i))
                .unwrap_or(0);
            stderr.truncate(cut);
        }
        return Err(SolverFailure::Crash {
            exit_code: status.code(),
            stderr,
        });
    }
    let text = String::from_utf8_lossy(&out).into_owned();
    if text.trim().is_empty() {
        return Err(SolverFailure::Empty);
    }
    Ok(text)
}

/// Kills the solver and anything it spawned into its process group.
fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        // SAFETY: signalling a process group we created; no memory is touched.
        let pgid = child.id() as libc::pid_t;
        unsafe {
            libc::kill(-pgid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
}
