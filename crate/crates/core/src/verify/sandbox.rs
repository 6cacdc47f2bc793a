//! Process isolation for running candidate programs against test cases.
//!
//! The runner launches one child process per test case with piped stdin /
//! stdout / stderr, a wall-clock timeout, and an address-space cap installed
//! via `setrlimit` between fork and exec. Launch failures (missing
//! interpreter, fork trouble) are infrastructure errors, kept strictly apart
//! from "the program ran and was wrong".

use std::io::Write;
use std::os::unix::process::CommandExt;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};
use thiserror::Error;
use wait_timeout::ChildExt;

/// Infrastructure failure: the command could not be run at all.
#[derive(Clone, Debug, Error)]
#[error("sandbox unavailable: {0}")]
pub struct SandboxError(pub String);

/// One process execution request.
#[derive(Clone, Debug)]
pub struct SandboxRequest {
    /// Argv, already split; `command[0]` is the executable.
    pub command: Vec<String>,
    /// Bytes fed to the child's stdin.
    pub stdin: Vec<u8>,
    /// Wall-clock limit; the child is killed when it elapses.
    pub time_limit: Duration,
    /// Address-space cap in bytes; 0 means uncapped.
    pub memory_limit_bytes: u64,
}

/// Outcome of one process execution.
#[derive(Clone, Debug)]
pub struct SandboxResponse {
    /// Exit code; `None` when the child died to a signal.
    pub exit_status: Option<i32>,
    /// Captured stdout bytes.
    pub stdout: Vec<u8>,
    /// Captured stderr bytes.
    pub stderr: Vec<u8>,
    /// Observed wall-clock duration.
    pub wall_time: Duration,
    /// True when the wall-clock limit killed the child.
    pub timed_out: bool,
}

/// Something that can execute sandboxed requests (swappable in tests).
pub trait SandboxRunner {
    /// Runs one request to completion or timeout.
    fn run(&self, request: &SandboxRequest) -> Result<SandboxResponse, SandboxError>;
}

/// The real, OS-process-backed runner.
#[derive(Clone, Copy, Debug, Default)]
pub struct ProcessSandbox;

impl SandboxRunner for ProcessSandbox {
    fn run(&self, request: &SandboxRequest) -> Result<SandboxResponse, SandboxError> {
        let (program, args) = request
            .command
            .split_first()
            .ok_or_else(|| SandboxError("empty command line".into()))?;

        let mut cmd = Command::new(program);
        cmd.args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());

        let memory_limit = request.memory_limit_bytes;
        if memory_limit > 0 {
            // SAFETY: setrlimit is async-signal-safe, the closure touches no
            // locks or allocations, so it is sound between fork and exec.
            unsafe {
                cmd.pre_exec(move || {
                    let limit = libc::rlimit {
                        rlim_cur: memory_limit as libc::rlim_t,
                        rlim_max: memory_limit as libc::rlim_t,
                    };
                    if libc::setrlimit(libc::RLIMIT_AS, &limit) != 0 {
                        return Err(std::io::Error::last_os_error());
                    }
                    Ok(())
                });
            }
        }

        let started = Instant::now();
        let mut child = cmd
            .spawn()
            .map_err(|e| SandboxError(format!("failed to launch {program:?}: {e}")))?;

        // Feed stdin and drain both output pipes on worker threads so a chatty
        // or input-hungry child cannot deadlock against us.
        let mut stdin_pipe = child.stdin.take().expect("stdin piped");
        let stdin_bytes = request.stdin.clone();
        let stdin_thread = std::thread::spawn(move || {
            let _ = stdin_pipe.write_all(&stdin_bytes);
            // Dropping the pipe closes it, signalling EOF.
        });
        let mut stdout_pipe = child.stdout.take().expect("stdout piped");
        let stdout_thread = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = std::io::Read::read_to_end(&mut stdout_pipe, &mut buf);
            buf
        });
        let mut stderr_pipe = child.stderr.take().expect("stderr piped");
        let stderr_thread = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = std::io::Read::read_to_end(&mut stderr_pipe, &mut buf);
            buf
        });

        let (status, timed_out) = match child
            .wait_timeout(request.time_limit)
            .map_err(|e| SandboxError(format!("wait failed: {e}")))?
        {
            Some(status) => (Some(status), false),
            None => {
                let _ = child.kill();
                let _ = child.wait();
                (None, true)
            }
        };

        let wall_time = started.elapsed();
        let _ = stdin_thread.join();
        let stdout = stdout_thread.join().unwrap_or_default();
        let stderr = stderr_thread.join().unwrap_or_default();

        Ok(SandboxResponse {
            exit_status: status.and_then(|s| s.code()),
            stdout,
            stderr,
            wall_time,
            timed_out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(command: &[&str], stdin: &[u8], time_limit: Duration) -> SandboxResponse {
        ProcessSandbox
            .run(&SandboxRequest {
                command: command.iter().map(|s| s.to_string()).collect(),
                stdin: stdin.to_vec(),
                time_limit,
                memory_limit_bytes: 256 << 20,
            })
            .unwrap()
    }

    #[test]
    fn echoes_stdin_through_cat() {
        let res = run(&["cat"], b"hello\nworld\n", Duration::from_secs(5));
        assert_eq!(res.exit_status, Some(0));
        assert!(!res.timed_out);
        assert_eq!(res.stdout, b"hello\nworld\n");
    }

    #[test]
    fn reports_nonzero_exit_status() {
        let res = run(&["sh", "-c", "echo oops >&2; exit 3"], b"", Duration::from_secs(5));
        assert_eq!(res.exit_status, Some(3));
        assert_eq!(res.stderr, b"oops\n");
    }

    #[test]
    fn kills_on_wall_clock_timeout() {
        let started = Instant::now();
        let res = run(&["sh", "-c", "while :; do :; done"], b"", Duration::from_millis(300));
        assert!(res.timed_out);
        assert!(res.exit_status.is_none());
        assert!(started.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn missing_executable_is_an_infrastructure_error() {
        let err = ProcessSandbox
            .run(&SandboxRequest {
                command: vec!["definitely-not-a-real-binary-io2u3".into()],
                stdin: vec![],
                time_limit: Duration::from_secs(1),
                memory_limit_bytes: 0,
            })
            .unwrap_err();
        assert!(err.0.contains("failed to launch"));
    }

    #[test]
    fn empty_command_is_an_infrastructure_error() {
        let err = ProcessSandbox
            .run(&SandboxRequest {
                command: vec![],
                stdin: vec![],
                time_limit: Duration::from_secs(1),
                memory_limit_bytes: 0,
            })
            .unwrap_err();
        assert!(err.0.contains("empty command"));
    }

    #[test]
    fn address_space_cap_stops_hog_processes() {
        // Asks the shell to build a huge in-memory string; under a 64 MiB
        // address-space cap this dies instead of succeeding.
        let res = ProcessSandbox
            .run(&SandboxRequest {
                command: vec![
                    "sh".into(),
                    "-c".into(),
                    "x=a; while :; do x=$x$x; done".into(),
                ],
                stdin: vec![],
                time_limit: Duration::from_secs(10),
                memory_limit_bytes: 64 << 20,
            })
            .unwrap();
        assert!(!res.timed_out, "memory cap should trip before the timeout");
        assert_ne!(res.exit_status, Some(0));
    }
}
