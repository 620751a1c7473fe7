//! Child process setup and the ptrace-based syscall recorder.
//!
//! The parent pre-renders every string the child will need (argv, envp,
//! mount sources/targets) so the post-fork child only issues raw
//! syscalls before exec — no allocation happens between fork and exec.
//! Overlay-mode children are created with `clone(2)` carrying namespace
//! flags; mounts performed there are invisible to the host.

#![allow(clippy::too_many_arguments)]

use std::collections::HashMap;
use std::ffi::CString;
use std::io::Read;
use std::os::fd::{FromRawFd, OwnedFd, RawFd};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::syscalls::{SyscallClass, SyscallEntry, SyscallRecord, SyscallTable};
use super::SandboxError;

/// One pre-rendered operation the child performs before exec.
#[derive(Debug, Clone)]
pub(crate) enum ChildOp {
    /// `mount --make-rprivate /` so sandbox mounts never propagate out.
    MountPrivateRoot,
    Mount {
        src: CString,
        target: CString,
        fstype: CString,
        flags: libc::c_ulong,
        data: Option<CString>,
    },
    /// Best-effort bind (device nodes); failure is not fatal.
    BindMountTolerant { src: CString, target: CString },
    /// Write a small file (uid/gid maps for user namespaces).
    WriteFile { path: CString, content: CString },
    Chroot(CString),
    Chdir(CString),
}

pub(crate) struct ExecPlan {
    pub program: CString,
    pub argv: Vec<CString>,
    pub envp: Vec<CString>,
    /// Pre-opened read end for the child's stdin.
    pub stdin_fd: OwnedFd,
    pub ops: Vec<ChildOp>,
    pub clone_flags: libc::c_ulong,
    /// Prefix stripped from recorded paths so they come out
    /// scratch-relative.
    pub scratch_prefix: String,
}

#[derive(Debug)]
pub(crate) enum RawExit {
    Exited(i32),
    Signaled(i32),
    /// The child reported a pre-exec setup or exec failure.
    ChildFailure { stage: u8, errno: i32 },
}

#[derive(Debug)]
pub(crate) struct RawExecution {
    pub exit: RawExit,
    pub syscalls: Vec<SyscallRecord>,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub stdout_truncated: bool,
    pub stderr_truncated: bool,
    pub syscalls_truncated: bool,
    pub timed_out: bool,
    pub duration: Duration,
}

pub(crate) const STAGE_OP_BASE: u8 = 10;
pub(crate) const STAGE_EXEC: u8 = 1;

pub(crate) fn stage_description(stage: u8) -> String {
    if stage == STAGE_EXEC {
        "exec".to_string()
    } else {
        format!("sandbox setup op {}", stage - STAGE_OP_BASE)
    }
}

fn pipe2(flags: libc::c_int) -> Result<(OwnedFd, OwnedFd), SandboxError> {
    let mut fds = [0 as RawFd; 2];
    if unsafe { libc::pipe2(fds.as_mut_ptr(), flags) } != 0 {
        return Err(SandboxError::Internal(format!(
            "pipe2 failed: {}",
            std::io::Error::last_os_error()
        )));
    }
    Ok(unsafe { (OwnedFd::from_raw_fd(fds[0]), OwnedFd::from_raw_fd(fds[1])) })
}

/// Reads from `fd` until EOF, keeping at most `cap` bytes and draining
/// the rest so the writer never blocks on a full pipe.
fn drain_capped(mut file: std::fs::File, cap: usize) -> (Vec<u8>, bool) {
    let mut kept = Vec::new();
    let mut truncated = false;
    let mut buf = [0u8; 8192];
    loop {
        match file.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => {
                let room = cap.saturating_sub(kept.len());
                if n > room {
                    truncated = true;
                }
                kept.extend_from_slice(&buf[..n.min(room)]);
            }
            Err(ref e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(_) => break,
        }
    }
    (kept, truncated)
}

// ---------------------------------------------------------------------
// child side: raw syscalls only
// ---------------------------------------------------------------------

unsafe fn report_and_exit(err_fd: RawFd, stage: u8, errno: i32) -> ! {
    let payload: [u8; 5] = [
        stage,
        errno as u8,
        (errno >> 8) as u8,
        (errno >> 16) as u8,
        (errno >> 24) as u8,
    ];
    libc::write(err_fd, payload.as_ptr().cast(), payload.len());
    libc::_exit(125);
}

pub(crate) unsafe fn run_child_op(op: &ChildOp) -> i32 {
    match op {
        ChildOp::MountPrivateRoot => libc::mount(
            std::ptr::null(),
            c"/".as_ptr(),
            std::ptr::null(),
            libc::MS_REC | libc::MS_PRIVATE,
            std::ptr::null(),
        ),
        ChildOp::Mount {
            src,
            target,
            fstype,
            flags,
            data,
        } => libc::mount(
            src.as_ptr(),
            target.as_ptr(),
            fstype.as_ptr(),
            *flags,
            data.as_ref()
                .map_or(std::ptr::null(), |d| d.as_ptr().cast()),
        ),
        ChildOp::BindMountTolerant { src, target } => {
            libc::mount(
                src.as_ptr(),
                target.as_ptr(),
                std::ptr::null(),
                libc::MS_BIND,
                std::ptr::null(),
            );
            0
        }
        ChildOp::WriteFile { path, content } => {
            let fd = libc::open(path.as_ptr(), libc::O_WRONLY);
            if fd < 0 {
                return -1;
            }
            let bytes = content.as_bytes();
            let n = libc::write(fd, bytes.as_ptr().cast(), bytes.len());
            libc::close(fd);
            if n == bytes.len() as isize {
                0
            } else {
                -1
            }
        }
        ChildOp::Chroot(path) => libc::chroot(path.as_ptr()),
        ChildOp::Chdir(path) => libc::chdir(path.as_ptr()),
    }
}

unsafe fn child_main(
    plan: &ExecPlan,
    argv_ptrs: &[*const libc::c_char],
    envp_ptrs: &[*const libc::c_char],
    stdin_fd: RawFd,
    stdout_fd: RawFd,
    stderr_fd: RawFd,
    err_fd: RawFd,
) -> ! {
    libc::dup2(stdin_fd, 0);
    libc::dup2(stdout_fd, 1);
    libc::dup2(stderr_fd, 2);
    for (i, op) in plan.ops.iter().enumerate() {
        *libc::__errno_location() = 0;
        if run_child_op(op) != 0 {
            report_and_exit(err_fd, STAGE_OP_BASE + i as u8, *libc::__errno_location());
        }
    }
    libc::ptrace(libc::PTRACE_TRACEME, 0, 0, 0);
    libc::execve(plan.program.as_ptr(), argv_ptrs.as_ptr(), envp_ptrs.as_ptr());
    report_and_exit(err_fd, STAGE_EXEC, *libc::__errno_location());
}

// ---------------------------------------------------------------------
// parent side: ptrace recording loop (x86_64 register layout)
// ---------------------------------------------------------------------

#[cfg(all(target_os = "linux", target_arch = "x86_64"))]
fn syscall_number(name: &str) -> Option<i64> {
    let n = match name {
        "read" => libc::SYS_read,
        "write" => libc::SYS_write,
        "open" => libc::SYS_open,
        "openat" => libc::SYS_openat,
        "creat" => libc::SYS_creat,
        "unlink" => libc::SYS_unlink,
        "unlinkat" => libc::SYS_unlinkat,
        "rename" => libc::SYS_rename,
        "renameat" => libc::SYS_renameat,
        "renameat2" => libc::SYS_renameat2,
        "mkdir" => libc::SYS_mkdir,
        "mkdirat" => libc::SYS_mkdirat,
        "rmdir" => libc::SYS_rmdir,
        "stat" => libc::SYS_stat,
        "lstat" => libc::SYS_lstat,
        "fstat" => libc::SYS_fstat,
        "newfstatat" => libc::SYS_newfstatat,
        "statx" => libc::SYS_statx,
        "statfs" => libc::SYS_statfs,
        "access" => libc::SYS_access,
        "faccessat" => libc::SYS_faccessat,
        "faccessat2" => libc::SYS_faccessat2,
        "getcwd" => libc::SYS_getcwd,
        "chdir" => libc::SYS_chdir,
        "execve" => libc::SYS_execve,
        _ => return None,
    };
    Some(n)
}

/// NUL-terminated string read out of the tracee, capped at 4 KiB.
#[cfg(all(target_os = "linux", target_arch = "x86_64"))]
fn read_tracee_string(pid: libc::pid_t, addr: u64) -> Option<String> {
    if addr == 0 {
        return None;
    }
    let mut bytes = Vec::new();
    let mut cursor = addr;
    while bytes.len() < 4096 {
        unsafe { *libc::__errno_location() = 0 };
        let word = unsafe { libc::ptrace(libc::PTRACE_PEEKDATA, pid, cursor, 0) };
        if word == -1 && unsafe { *libc::__errno_location() } != 0 {
            return None;
        }
        for byte in word.to_ne_bytes() {
            if byte == 0 {
                return Some(String::from_utf8_lossy(&bytes).into_owned());
            }
            bytes.push(byte);
        }
        cursor += 8;
    }
    Some(String::from_utf8_lossy(&bytes).into_owned())
}

/// Scratch-relative view of a recorded path: strips the sandbox prefix
/// and a leading `./`; everything else is kept verbatim.
pub(crate) fn normalize_path(raw: &str, scratch_prefix: &str) -> String {
    let mut path = raw;
    if !scratch_prefix.is_empty() {
        if let Some(rest) = path.strip_prefix(scratch_prefix) {
            path = rest.strip_prefix('/').unwrap_or(rest);
            if path.is_empty() {
                return ".".to_string();
            }
        }
    }
    path.strip_prefix("./").unwrap_or(path).to_string()
}

#[cfg(all(target_os = "linux", target_arch = "x86_64"))]
struct PendingCall {
    name: String,
    args: Vec<String>,
    classification: SyscallClass,
    touched_path: Option<String>,
    recorded: bool,
}

#[cfg(all(target_os = "linux", target_arch = "x86_64"))]
fn capture_entry(
    pid: libc::pid_t,
    regs: &libc::user_regs_struct,
    entry: &SyscallEntry,
    table: &SyscallTable,
    scratch_prefix: &str,
) -> PendingCall {
    let raw_args = [regs.rdi, regs.rsi, regs.rdx, regs.r10];
    let mut args: Vec<String> = raw_args.iter().map(|a| (*a as i64).to_string()).collect();
    let mut touched_path = None;
    if let Some(idx) = entry.path_arg {
        if let Some(path) = read_tracee_string(pid, raw_args[idx]) {
            args[idx] = format!("{path:?}");
            touched_path = Some(normalize_path(&path, scratch_prefix));
        }
    }
    let flags = entry.open_flags_arg.map(|idx| raw_args[idx]);
    PendingCall {
        name: entry.name.clone(),
        args,
        classification: table.classify(&entry.name, flags),
        touched_path,
        recorded: true,
    }
}

#[cfg(all(target_os = "linux", target_arch = "x86_64"))]
pub(crate) fn execute(
    plan: &ExecPlan,
    table: &SyscallTable,
    timeout: Duration,
    max_records: usize,
    max_capture: usize,
) -> Result<RawExecution, SandboxError> {
    let by_number: HashMap<i64, SyscallEntry> = table
        .names()
        .filter_map(|name| {
            syscall_number(name).map(|n| (n, table.entry(name).unwrap().clone()))
        })
        .collect();

    let (stdout_r, stdout_w) = pipe2(0)?;
    let (stderr_r, stderr_w) = pipe2(0)?;
    let (err_r, err_w) = pipe2(libc::O_CLOEXEC)?;

    let mut argv_ptrs: Vec<*const libc::c_char> =
        plan.argv.iter().map(|a| a.as_ptr()).collect();
    argv_ptrs.push(std::ptr::null());
    let mut envp_ptrs: Vec<*const libc::c_char> =
        plan.envp.iter().map(|e| e.as_ptr()).collect();
    envp_ptrs.push(std::ptr::null());

    let start = Instant::now();
    let pid = unsafe {
        libc::syscall(
            libc::SYS_clone,
            plan.clone_flags | libc::SIGCHLD as libc::c_ulong,
            0usize,
            0usize,
            0usize,
            0usize,
        )
    } as libc::pid_t;
    if pid < 0 {
        return Err(SandboxError::Internal(format!(
            "clone failed: {}",
            std::io::Error::last_os_error()
        )));
    }
    if pid == 0 {
        // child: only raw syscalls from here to exec
        use std::os::fd::AsRawFd;
        unsafe {
            child_main(
                plan,
                &argv_ptrs,
                &envp_ptrs,
                plan.stdin_fd.as_raw_fd(),
                stdout_w.as_raw_fd(),
                stderr_w.as_raw_fd(),
                err_w.as_raw_fd(),
            )
        };
    }

    drop(stdout_w);
    drop(stderr_w);
    drop(err_w);

    let out_handle = std::thread::spawn(move || drain_capped(stdout_r.into(), max_capture));
    let err_handle = std::thread::spawn(move || drain_capped(stderr_r.into(), max_capture));

    let timed_out = Arc::new(AtomicBool::new(false));
    let (done_tx, done_rx) = mpsc::channel::<()>();
    let watchdog = {
        let timed_out = Arc::clone(&timed_out);
        std::thread::spawn(move || {
            if done_rx.recv_timeout(timeout).is_err() {
                timed_out.store(true, Ordering::SeqCst);
                unsafe { libc::kill(pid, libc::SIGKILL) };
            }
        })
    };

    let mut syscalls: Vec<SyscallRecord> = Vec::new();
    let mut syscalls_truncated = false;
    let mut pending: Option<PendingCall> = None;
    let mut options_set = false;

    let raw_exit = loop {
        let mut status = 0;
        let waited = unsafe { libc::waitpid(pid, &mut status, 0) };
        if waited < 0 {
            break RawExit::Signaled(libc::SIGKILL);
        }
        if libc::WIFEXITED(status) {
            break RawExit::Exited(libc::WEXITSTATUS(status));
        }
        if libc::WIFSIGNALED(status) {
            break RawExit::Signaled(libc::WTERMSIG(status));
        }
        let stop_sig = libc::WSTOPSIG(status);
        if !options_set {
            unsafe {
                libc::ptrace(
                    libc::PTRACE_SETOPTIONS,
                    pid,
                    0,
                    libc::PTRACE_O_TRACESYSGOOD | libc::PTRACE_O_EXITKILL,
                )
            };
            options_set = true;
        }
        let mut deliver: libc::c_ulong = 0;
        if stop_sig == libc::SIGTRAP | 0x80 {
            let mut regs: libc::user_regs_struct = unsafe { std::mem::zeroed() };
            let got = unsafe {
                libc::ptrace(
                    libc::PTRACE_GETREGS,
                    pid,
                    0,
                    &mut regs as *mut libc::user_regs_struct,
                )
            };
            if got == 0 {
                // on syscall entry the kernel primes rax with -ENOSYS
                let is_entry = regs.rax as i64 == -(libc::ENOSYS as i64);
                if is_entry {
                    pending = by_number.get(&(regs.orig_rax as i64)).map(|entry| {
                        if syscalls.len() < max_records {
                            capture_entry(pid, &regs, entry, table, &plan.scratch_prefix)
                        } else {
                            syscalls_truncated = true;
                            PendingCall {
                                name: String::new(),
                                args: Vec::new(),
                                classification: SyscallClass::Other,
                                touched_path: None,
                                recorded: false,
                            }
                        }
                    });
                } else if let Some(call) = pending.take() {
                    if call.recorded {
                        syscalls.push(SyscallRecord {
                            name: call.name,
                            args: call.args,
                            return_value: regs.rax as i64,
                            classification: call.classification,
                            touched_path: call.touched_path,
                        });
                    }
                }
            }
        } else if stop_sig != libc::SIGTRAP {
            // genuine signal: deliver it on resume
            deliver = stop_sig as libc::c_ulong;
        }
        unsafe { libc::ptrace(libc::PTRACE_SYSCALL, pid, 0, deliver) };
    };

    let _ = done_tx.send(());
    let _ = watchdog.join();
    let (stdout, stdout_truncated) = out_handle.join().unwrap_or_default();
    let (stderr, stderr_truncated) = err_handle.join().unwrap_or_default();
    let duration = start.elapsed();

    // a pre-exec failure report takes precedence over the raw status
    let mut failure = [0u8; 5];
    let exit = {
        let mut err_file: std::fs::File = err_r.into();
        match err_file.read(&mut failure) {
            Ok(5) => RawExit::ChildFailure {
                stage: failure[0],
                errno: i32::from_le_bytes([failure[1], failure[2], failure[3], failure[4]]),
            },
            _ => raw_exit,
        }
    };

    let was_timeout = timed_out.load(Ordering::SeqCst);
    Ok(RawExecution {
        exit,
        syscalls,
        stdout,
        stderr,
        stdout_truncated,
        stderr_truncated,
        syscalls_truncated,
        timed_out: was_timeout,
        duration,
    })
}

#[cfg(not(all(target_os = "linux", target_arch = "x86_64")))]
pub(crate) fn execute(
    _plan: &ExecPlan,
    _table: &SyscallTable,
    _timeout: Duration,
    _max_records: usize,
    _max_capture: usize,
) -> Result<RawExecution, SandboxError> {
    Err(SandboxError::Unsupported(
        "the syscall recorder requires Linux on x86_64".into(),
    ))
}
