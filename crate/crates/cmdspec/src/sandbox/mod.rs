//! Isolated traced execution of invocation configurations.
//!
//! Two sandbox modes share one contract: materialize an [`FsState`],
//! execute the command under syscall tracing, and report a classified
//! filesystem diff plus exit status as an [`ExecutionTrace`].
//!
//! * **Overlay mode** enters fresh mount and pid namespaces (plus a user
//!   namespace when unprivileged), mounts every host top-level directory
//!   as a read-only lower layer under a writable upperdir, binds the
//!   standard device nodes, mounts a fresh `/proc`, and chroots. All
//!   mounts live only in the child's namespace, so teardown never
//!   touches the host. Diffing traverses only the upperdirs.
//! * **Copy mode** materializes just the scratch tree in a temporary
//!   directory with the working directory pinned inside it, and diffs a
//!   pre-execution manifest against the post state. It runs unprivileged
//!   on any Unix.

mod exec;
pub mod fsdiff;
pub mod strace;
pub mod syscalls;

pub use fsdiff::{diff_manifests, scan_manifest, ChangeKind, FsDiffEntry, Manifest};
pub use syscalls::{SyscallClass, SyscallRecord, SyscallTable};

use std::collections::BTreeMap;
use std::ffi::CString;
use std::fs;
use std::io::{BufRead, Write};
use std::os::fd::OwnedFd;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content;
use crate::generate::{FsState, InvocationConfig, PathKind, PointerKind};
use exec::{ChildOp, ExecPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SandboxMode {
    /// Namespaces + per-directory overlay mounts + chroot.
    Overlay,
    /// Portable tree-copy fallback in a temporary directory.
    Copy,
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("overlay sandbox unavailable ({0}); retry with copy mode (--mode copy)")]
    OverlayUnavailable(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("sandbox setup failed at {stage}: {message}")]
    Setup { stage: String, message: String },
    #[error("internal sandbox error: {0}")]
    Internal(String),
}

#[derive(Debug)]
struct OverlayLayout {
    scratch_upper: PathBuf,
    scratch_lower: PathBuf,
    /// (reported prefix like "/etc", upperdir, host lowerdir)
    host_overlays: Vec<(String, PathBuf, PathBuf)>,
}

/// A live sandbox for exactly one configuration. Dropping the handle
/// removes every host-side artifact; overlay mounts only ever existed in
/// the traced child's namespace.
#[derive(Debug)]
pub struct SandboxHandle {
    pub mode: SandboxMode,
    temp: tempfile::TempDir,
    env: FsState,
    /// Prefix rendering absolute path arguments inside the sandbox.
    scratch_prefix: PathBuf,
    /// Host-visible scratch tree (copy: the live tree; overlay: lowerdir).
    scratch_host: PathBuf,
    pre_manifest: Manifest,
    ops: Vec<ChildOp>,
    clone_flags: libc::c_ulong,
    overlay: Option<OverlayLayout>,
}

impl SandboxHandle {
    pub fn scratch_prefix(&self) -> &Path {
        &self.scratch_prefix
    }

    /// Host path of the materialized pre-state (copy mode: the live
    /// scratch tree itself).
    pub fn scratch_host(&self) -> &Path {
        &self.scratch_host
    }

    pub fn env(&self) -> &FsState {
        &self.env
    }

    /// Explicit teardown; also happens on drop.
    pub fn teardown(self) -> std::io::Result<()> {
        self.temp.close()
    }
}

fn cstring(path: impl AsRef<std::ffi::OsStr>) -> Result<CString, SandboxError> {
    use std::os::unix::ffi::OsStrExt;
    CString::new(path.as_ref().as_bytes())
        .map_err(|_| SandboxError::Internal("path contains a NUL byte".into()))
}

/// Writes the environment's tree under `root`. File pointers get the
/// default text payload so read-class commands observe real content;
/// `overrides` substitutes per-slot payloads (probe partitions).
fn materialize_env(
    env: &FsState,
    root: &Path,
    payload: &[u8],
    overrides: &BTreeMap<String, crate::content::ContentSample>,
) -> std::io::Result<()> {
    for (slot, state) in &env.slots {
        let path = root.join(slot);
        let bytes = overrides
            .get(slot)
            .map(|s| s.payload.as_slice())
            .unwrap_or(payload);
        match state.pointer {
            PointerKind::File => fs::write(&path, bytes)?,
            PointerKind::DirEmpty => fs::create_dir(&path)?,
            PointerKind::DirOneChild => {
                fs::create_dir(&path)?;
                fs::write(path.join("c0"), bytes)?;
            }
            PointerKind::Nonexistent | PointerKind::ParentNonexistent => {}
        }
    }
    Ok(())
}

/// Host top-level directories that never get an overlay: kernel
/// pseudo-filesystems, devices, and volatile trees the sandbox replaces
/// with fresh instances.
const SKIPPED_TOP_DIRS: &[&str] = &["proc", "sys", "dev", "run", "tmp", "scratch", "lost+found"];

const DEVICE_NODES: &[&str] = &["tty", "null", "zero", "full", "random", "urandom"];

fn user_namespace_ops() -> Result<Vec<ChildOp>, SandboxError> {
    let uid = unsafe { libc::getuid() };
    let gid = unsafe { libc::getgid() };
    Ok(vec![
        ChildOp::WriteFile {
            path: cstring("/proc/self/setgroups")?,
            content: cstring("deny")?,
        },
        ChildOp::WriteFile {
            path: cstring("/proc/self/uid_map")?,
            content: cstring(format!("0 {uid} 1"))?,
        },
        ChildOp::WriteFile {
            path: cstring("/proc/self/gid_map")?,
            content: cstring(format!("0 {gid} 1"))?,
        },
    ])
}

/// One-time probe: can this process actually enter a mount namespace and
/// create an overlay mount?
pub fn overlay_available() -> bool {
    static PROBE: OnceLock<bool> = OnceLock::new();
    *PROBE.get_or_init(|| probe_overlay().unwrap_or(false))
}

#[cfg(target_os = "linux")]
fn probe_overlay() -> Result<bool, SandboxError> {
    let temp = tempfile::tempdir()?;
    for dir in ["lower", "upper", "work", "merged"] {
        fs::create_dir(temp.path().join(dir))?;
    }
    let mut ops = Vec::new();
    let mut flags = libc::CLONE_NEWNS as libc::c_ulong;
    if unsafe { libc::geteuid() } != 0 {
        flags |= libc::CLONE_NEWUSER as libc::c_ulong;
        ops.extend(user_namespace_ops()?);
    }
    ops.push(ChildOp::MountPrivateRoot);
    ops.push(ChildOp::Mount {
        src: cstring("overlay")?,
        target: cstring(temp.path().join("merged"))?,
        fstype: cstring("overlay")?,
        flags: 0,
        data: Some(cstring(format!(
            "lowerdir={base}/lower,upperdir={base}/upper,workdir={base}/work",
            base = temp.path().display()
        ))?),
    });

    let pid = unsafe {
        libc::syscall(
            libc::SYS_clone,
            flags | libc::SIGCHLD as libc::c_ulong,
            0usize,
            0usize,
            0usize,
            0usize,
        )
    } as libc::pid_t;
    if pid < 0 {
        return Ok(false);
    }
    if pid == 0 {
        for op in &ops {
            if unsafe { exec::run_child_op(op) } != 0 {
                unsafe { libc::_exit(1) };
            }
        }
        unsafe { libc::_exit(0) };
    }
    let mut status = 0;
    if unsafe { libc::waitpid(pid, &mut status, 0) } < 0 {
        return Ok(false);
    }
    Ok(libc::WIFEXITED(status) && libc::WEXITSTATUS(status) == 0)
}

#[cfg(not(target_os = "linux"))]
fn probe_overlay() -> Result<bool, SandboxError> {
    Ok(false)
}

/// Materializes `env` in a fresh sandbox of the requested mode.
pub fn setup_sandbox(env: &FsState, mode: SandboxMode) -> Result<SandboxHandle, SandboxError> {
    setup_sandbox_with(env, &BTreeMap::new(), mode)
}

/// Like [`setup_sandbox`] with per-slot file payload overrides.
pub fn setup_sandbox_with(
    env: &FsState,
    overrides: &BTreeMap<String, crate::content::ContentSample>,
    mode: SandboxMode,
) -> Result<SandboxHandle, SandboxError> {
    let payload = content::default_sample(content::ContentKind::Text).payload;
    match mode {
        SandboxMode::Copy => {
            let temp = tempfile::tempdir()?;
            let scratch = temp.path().join("scratch");
            fs::create_dir(&scratch)?;
            materialize_env(env, &scratch, &payload, overrides)?;
            let pre_manifest = scan_manifest(&scratch)?;
            let ops = vec![ChildOp::Chdir(cstring(&scratch)?)];
            Ok(SandboxHandle {
                mode,
                env: env.clone(),
                scratch_prefix: scratch.clone(),
                scratch_host: scratch,
                pre_manifest,
                ops,
                clone_flags: 0,
                overlay: None,
                temp,
            })
        }
        SandboxMode::Overlay => {
            if !overlay_available() {
                return Err(SandboxError::OverlayUnavailable(
                    "mount-namespace/overlay probe failed on this host".into(),
                ));
            }
            setup_overlay(env, &payload, overrides)
        }
    }
}

fn setup_overlay(
    env: &FsState,
    payload: &[u8],
    overrides: &BTreeMap<String, crate::content::ContentSample>,
) -> Result<SandboxHandle, SandboxError> {
    let temp = tempfile::tempdir()?;
    let base = temp.path();
    let scratch_lower = base.join("scratch_lower");
    let scratch_upper = base.join("scratch_upper");
    let scratch_work = base.join("scratch_work");
    let root = base.join("root");
    for dir in [&scratch_lower, &scratch_upper, &scratch_work, &root] {
        fs::create_dir(dir)?;
    }
    materialize_env(env, &scratch_lower, payload, overrides)?;

    let mut ops = Vec::new();
    let mut flags = (libc::CLONE_NEWNS | libc::CLONE_NEWPID) as libc::c_ulong;
    if unsafe { libc::geteuid() } != 0 {
        flags |= libc::CLONE_NEWUSER as libc::c_ulong;
        ops.extend(user_namespace_ops()?);
    }
    ops.push(ChildOp::MountPrivateRoot);

    // one overlay per host top-level directory
    let mut host_overlays = Vec::new();
    let upper_base = base.join("upper");
    let work_base = base.join("work");
    fs::create_dir(&upper_base)?;
    fs::create_dir(&work_base)?;
    let mut entries: Vec<_> = fs::read_dir("/")?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let name = entry.file_name().to_string_lossy().into_owned();
        if SKIPPED_TOP_DIRS.contains(&name.as_str()) {
            continue;
        }
        let meta = entry.metadata()?;
        if meta.file_type().is_symlink() {
            // /bin -> usr/bin style links are replicated, not mounted
            let target = fs::read_link(entry.path())?;
            std::os::unix::fs::symlink(&target, root.join(&name))?;
            continue;
        }
        if !meta.is_dir() {
            continue;
        }
        let upper = upper_base.join(&name);
        let work = work_base.join(&name);
        let target = root.join(&name);
        fs::create_dir(&upper)?;
        fs::create_dir(&work)?;
        fs::create_dir(&target)?;
        ops.push(ChildOp::Mount {
            src: cstring("overlay")?,
            target: cstring(&target)?,
            fstype: cstring("overlay")?,
            flags: 0,
            data: Some(cstring(format!(
                "lowerdir=/{name},upperdir={},workdir={}",
                upper.display(),
                work.display()
            ))?),
        });
        host_overlays.push((format!("/{name}"), upper, PathBuf::from(format!("/{name}"))));
    }

    // fresh volatile trees
    for dir in ["proc", "sys", "dev", "run", "tmp", "scratch"] {
        fs::create_dir(root.join(dir))?;
    }
    ops.push(ChildOp::Mount {
        src: cstring("overlay")?,
        target: cstring(root.join("scratch"))?,
        fstype: cstring("overlay")?,
        flags: 0,
        data: Some(cstring(format!(
            "lowerdir={},upperdir={},workdir={}",
            scratch_lower.display(),
            scratch_upper.display(),
            scratch_work.display()
        ))?),
    });
    for node in DEVICE_NODES {
        let target = root.join("dev").join(node);
        fs::write(&target, b"")?;
        ops.push(ChildOp::BindMountTolerant {
            src: cstring(format!("/dev/{node}"))?,
            target: cstring(&target)?,
        });
    }
    ops.push(ChildOp::Mount {
        src: cstring("proc")?,
        target: cstring(root.join("proc"))?,
        fstype: cstring("proc")?,
        flags: 0,
        data: None,
    });
    ops.push(ChildOp::Chroot(cstring(&root)?));
    ops.push(ChildOp::Chdir(cstring("/scratch")?));

    Ok(SandboxHandle {
        mode: SandboxMode::Overlay,
        env: env.clone(),
        scratch_prefix: PathBuf::from("/scratch"),
        scratch_host: scratch_lower.clone(),
        pre_manifest: Manifest::new(),
        ops,
        clone_flags: flags,
        overlay: Some(OverlayLayout {
            scratch_upper,
            scratch_lower,
            host_overlays,
        }),
        temp,
    })
}

// ---------------------------------------------------------------------
// traces
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExitStatus {
    Exited { code: i32 },
    Signaled { signal: i32 },
    /// exec itself failed inside the sandbox (a distinct error class).
    ExecFailure { errno: i32 },
    /// The sandbox could not run the command at all.
    SandboxFailure { message: String },
}

impl ExitStatus {
    pub fn success(&self) -> bool {
        matches!(self, ExitStatus::Exited { code: 0 })
    }

    /// Whether the run produced a usable behavioral observation.
    pub fn observable(&self) -> bool {
        matches!(self, ExitStatus::Exited { .. } | ExitStatus::Signaled { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLimits {
    pub timeout: Duration,
    pub max_syscall_records: usize,
    pub max_capture_bytes: usize,
}

impl Default for TraceLimits {
    fn default() -> Self {
        TraceLimits {
            timeout: Duration::from_secs(10),
            max_syscall_records: 50_000,
            max_capture_bytes: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub config_id: String,
    pub exit_status: ExitStatus,
    /// Ordered by observation time.
    pub syscalls: Vec<SyscallRecord>,
    pub fs_diff: Vec<FsDiffEntry>,
    #[serde(with = "crate::b64")]
    pub stdout_bytes: Vec<u8>,
    #[serde(with = "crate::b64")]
    pub stderr_bytes: Vec<u8>,
    pub duration_ms: u64,
    /// True iff a size or time limit was hit.
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Full originating configuration, for archive replay.
    pub invocation: InvocationConfig,
}

/// argv with absolute path slots prefixed by the sandbox scratch root.
pub fn resolve_argv(config: &InvocationConfig, handle: &SandboxHandle) -> Vec<String> {
    let mut argv = config.argv.clone();
    for (idx, slot) in &config.path_slots {
        if let Some(state) = config.env.slots.get(slot) {
            if state.path_kind == PathKind::Absolute {
                argv[*idx] = format!(
                    "{}/{}",
                    handle.scratch_prefix().display(),
                    argv[*idx]
                );
            }
        }
    }
    argv
}

const SEARCH_PATH: &[&str] = &[
    "/usr/local/sbin",
    "/usr/local/bin",
    "/usr/sbin",
    "/usr/bin",
    "/sbin",
    "/bin",
];

fn resolve_program(name: &str) -> Option<PathBuf> {
    use std::os::unix::fs::PermissionsExt;
    if name.contains('/') {
        return Some(PathBuf::from(name));
    }
    for dir in SEARCH_PATH {
        let candidate = Path::new(dir).join(name);
        if let Ok(meta) = fs::metadata(&candidate) {
            if meta.is_file() && meta.permissions().mode() & 0o111 != 0 {
                return Some(candidate);
            }
        }
    }
    None
}

fn fixed_envp() -> Result<Vec<CString>, SandboxError> {
    [
        format!("PATH={}", SEARCH_PATH.join(":")),
        "LC_ALL=C".to_string(),
        "LANG=C".to_string(),
        "HOME=/".to_string(),
        "TZ=UTC".to_string(),
        "TERM=dumb".to_string(),
    ]
    .into_iter()
    .map(cstring)
    .collect()
}

fn open_stdin(handle: &SandboxHandle, stdin: Option<&[u8]>) -> Result<OwnedFd, SandboxError> {
    let path = match stdin {
        Some(payload) => {
            let path = handle.temp.path().join("stdin");
            fs::write(&path, payload)?;
            path
        }
        // empty stream: immediate EOF, so filters never block
        None => PathBuf::from("/dev/null"),
    };
    Ok(fs::File::open(path)?.into())
}

fn adhoc_invocation(handle: &SandboxHandle, argv: &[String]) -> InvocationConfig {
    InvocationConfig::new(
        argv.to_vec(),
        handle.env.clone(),
        None,
        Vec::new(),
        crate::generate::ConfigRole::Sweep,
    )
}

/// Runs `argv` inside the sandbox under syscall tracing. The returned
/// trace has no filesystem diff yet; see [`diff_filesystem`].
pub fn trace_execution(
    handle: &SandboxHandle,
    argv: &[String],
    stdin: Option<&[u8]>,
    limits: &TraceLimits,
    table: &SyscallTable,
) -> Result<ExecutionTrace, SandboxError> {
    if argv.is_empty() {
        return Err(SandboxError::Internal("empty argv".into()));
    }
    let invocation = adhoc_invocation(handle, argv);
    let config_id = invocation.config_id.clone();
    let Some(program) = resolve_program(&argv[0]) else {
        return Ok(ExecutionTrace {
            config_id,
            exit_status: ExitStatus::ExecFailure {
                errno: libc::ENOENT,
            },
            syscalls: Vec::new(),
            fs_diff: Vec::new(),
            stdout_bytes: Vec::new(),
            stderr_bytes: Vec::new(),
            duration_ms: 0,
            truncated: false,
            error: Some(format!("{} not found on the search path", argv[0])),
            invocation,
        });
    };

    let plan = ExecPlan {
        program: cstring(program)?,
        argv: argv.iter().map(cstring).collect::<Result<_, _>>()?,
        envp: fixed_envp()?,
        stdin_fd: open_stdin(handle, stdin)?,
        ops: handle.ops.clone(),
        clone_flags: handle.clone_flags,
        scratch_prefix: handle.scratch_prefix.display().to_string(),
    };
    let raw = exec::execute(
        &plan,
        table,
        limits.timeout,
        limits.max_syscall_records,
        limits.max_capture_bytes,
    )?;

    let (exit_status, mut error) = match raw.exit {
        exec::RawExit::Exited(code) => (ExitStatus::Exited { code }, None),
        exec::RawExit::Signaled(signal) => (ExitStatus::Signaled { signal }, None),
        exec::RawExit::ChildFailure { stage, errno } if stage == exec::STAGE_EXEC => (
            ExitStatus::ExecFailure { errno },
            Some(format!(
                "exec failed: {}",
                std::io::Error::from_raw_os_error(errno)
            )),
        ),
        exec::RawExit::ChildFailure { stage, errno } => {
            return Err(SandboxError::Setup {
                stage: exec::stage_description(stage),
                message: std::io::Error::from_raw_os_error(errno).to_string(),
            })
        }
    };
    if raw.timed_out {
        error = Some("wall-clock timeout exceeded".into());
    }
    Ok(ExecutionTrace {
        config_id,
        exit_status,
        syscalls: raw.syscalls,
        fs_diff: Vec::new(),
        stdout_bytes: raw.stdout,
        stderr_bytes: raw.stderr,
        duration_ms: raw.duration.as_millis() as u64,
        truncated: raw.syscalls_truncated
            || raw.stdout_truncated
            || raw.stderr_truncated
            || raw.timed_out,
        error,
        invocation,
    })
}

/// Classified divergence the finished command left behind.
pub fn diff_filesystem(handle: &SandboxHandle) -> Result<Vec<FsDiffEntry>, SandboxError> {
    match &handle.overlay {
        None => {
            let post = scan_manifest(&handle.scratch_host)?;
            Ok(diff_manifests(&handle.pre_manifest, &post))
        }
        Some(layout) => {
            let mut diff =
                fsdiff::diff_upperdir(&layout.scratch_upper, &layout.scratch_lower, "")?;
            for (prefix, upper, lower) in &layout.host_overlays {
                diff.extend(fsdiff::diff_upperdir(upper, lower, prefix)?);
            }
            diff.sort();
            Ok(diff)
        }
    }
}

fn error_trace(config: &InvocationConfig, error: &SandboxError) -> ExecutionTrace {
    let message = error.to_string();
    ExecutionTrace {
        config_id: config.config_id.clone(),
        exit_status: ExitStatus::SandboxFailure {
            message: message.clone(),
        },
        syscalls: Vec::new(),
        fs_diff: Vec::new(),
        stdout_bytes: Vec::new(),
        stderr_bytes: Vec::new(),
        duration_ms: 0,
        truncated: false,
        error: Some(message),
        invocation: config.clone(),
    }
}

/// Full pipeline for one configuration: sandbox, trace, diff. Errors are
/// embedded in the returned trace, never propagated, so one bad config
/// cannot abort a batch.
pub fn run_config(
    config: &InvocationConfig,
    mode: SandboxMode,
    limits: &TraceLimits,
    table: &SyscallTable,
) -> ExecutionTrace {
    match run_config_inner(config, mode, limits, table) {
        Ok(trace) => trace,
        Err(e) => error_trace(config, &e),
    }
}

fn run_config_inner(
    config: &InvocationConfig,
    mode: SandboxMode,
    limits: &TraceLimits,
    table: &SyscallTable,
) -> Result<ExecutionTrace, SandboxError> {
    let handle = setup_sandbox_with(&config.env, &config.slot_contents, mode)?;
    let argv = resolve_argv(config, &handle);
    let stdin = config.stdin.as_ref().map(|s| s.payload.as_slice());
    let mut trace = trace_execution(&handle, &argv, stdin, limits, table)?;
    trace.fs_diff = diff_filesystem(&handle)?;
    trace.config_id = config.config_id.clone();
    trace.invocation = config.clone();
    handle.teardown()?;
    Ok(trace)
}

/// Traces every config with a worker pool; each worker owns one sandbox
/// at a time. Output is ordered by config_id regardless of completion
/// order.
pub fn run_batch(
    configs: &[InvocationConfig],
    workers: usize,
    mode: SandboxMode,
    limits: &TraceLimits,
    table: &SyscallTable,
) -> Vec<ExecutionTrace> {
    let worker_count = workers.clamp(1, configs.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<ExecutionTrace>> = Mutex::new(Vec::with_capacity(configs.len()));
    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= configs.len() {
                    break;
                }
                let config = &configs[i];
                let trace = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                    run_config(config, mode, limits, table)
                }))
                .unwrap_or_else(|_| {
                    error_trace(config, &SandboxError::Internal("tracer panicked".into()))
                });
                results.lock().unwrap().push(trace);
            });
        }
    });
    let mut out = results.into_inner().unwrap();
    out.sort_by(|a, b| a.config_id.cmp(&b.config_id));
    out
}

// ---------------------------------------------------------------------
// trace archive (traces.ndjson)
// ---------------------------------------------------------------------

/// One JSON record per trace, newline-delimited, ordered as given.
pub fn write_traces_ndjson(path: &Path, traces: &[ExecutionTrace]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for trace in traces {
        serde_json::to_writer(&mut out, trace)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_traces_ndjson(path: &Path) -> std::io::Result<Vec<ExecutionTrace>> {
    let file = std::io::BufReader::new(fs::File::open(path)?);
    let mut traces = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trace: ExecutionTrace = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::other(format!("trace archive line {}: {e}", lineno + 1))
        })?;
        traces.push(trace);
    }
    Ok(traces)
}
