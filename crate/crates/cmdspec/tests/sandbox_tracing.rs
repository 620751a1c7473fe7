//! End-to-end sandbox tests: real commands, real ptrace tracing.
//!
//! Everything here runs in copy mode; overlay-mode assertions activate
//! only when the host probe says namespaces + overlayfs are usable.

#![cfg(all(target_os = "linux", target_arch = "x86_64"))]

use std::collections::BTreeMap;
use std::time::Duration;

use cmdspec::generate::{
    ConfigRole, FsState, InvocationConfig, PathKind, PathState, PointerKind,
};
use cmdspec::sandbox::{
    self, diff_filesystem, overlay_available, resolve_argv, run_batch, run_config, setup_sandbox,
    trace_execution, ChangeKind, ExitStatus, SandboxMode, SyscallClass, SyscallTable, TraceLimits,
};

fn env_one(slot: &str, kind: PathKind, pointer: PointerKind) -> FsState {
    let mut slots = BTreeMap::new();
    slots.insert(
        slot.to_string(),
        PathState {
            path_kind: kind,
            pointer,
        },
    );
    FsState { slots }
}

fn limits() -> TraceLimits {
    TraceLimits::default()
}

fn table() -> SyscallTable {
    SyscallTable::default_table()
}

fn config(argv: &[&str], env: FsState, slots: &[(usize, &str)]) -> InvocationConfig {
    InvocationConfig::new(
        argv.iter().map(|s| s.to_string()).collect(),
        env,
        None,
        slots
            .iter()
            .map(|(i, s)| (*i, s.to_string()))
            .collect(),
        ConfigRole::Sweep,
    )
}

#[test]
fn rm_on_a_file_probes_then_unlinks() {
    // [PAPER] §2: the trace for `rm p0` (p0 a file) is {read path,
    // delete path} with exit 0, and the diff is exactly file_removed.
    let cfg = config(
        &["rm", "p0"],
        env_one("p0", PathKind::Relative, PointerKind::File),
        &[(1, "p0")],
    );
    let trace = run_config(&cfg, SandboxMode::Copy, &limits(), &table());
    assert_eq!(trace.exit_status, ExitStatus::Exited { code: 0 });
    let probes_p0 = trace.syscalls.iter().any(|s| {
        s.classification == SyscallClass::Read && s.touched_path.as_deref() == Some("p0")
    });
    let unlinks_p0 = trace.syscalls.iter().any(|s| {
        s.classification == SyscallClass::Write
            && s.touched_path.as_deref() == Some("p0")
            && s.name.contains("unlink")
    });
    assert!(probes_p0, "no read-class probe of p0: {:?}", trace.syscalls);
    assert!(unlinks_p0, "no write-class unlink of p0: {:?}", trace.syscalls);
    assert_eq!(trace.fs_diff.len(), 1);
    assert_eq!(trace.fs_diff[0].path, "p0");
    assert_eq!(trace.fs_diff[0].change, ChangeKind::FileRemoved);
}

#[test]
fn rm_on_an_empty_directory_fails_without_mutating() {
    // [PAPER] §2.1: flagless rm fails if the path is not a file; no
    // write-class call lands on p0 and the tree is untouched.
    let cfg = config(
        &["rm", "p0"],
        env_one("p0", PathKind::Relative, PointerKind::DirEmpty),
        &[(1, "p0")],
    );
    let trace = run_config(&cfg, SandboxMode::Copy, &limits(), &table());
    match trace.exit_status {
        ExitStatus::Exited { code } => assert_ne!(code, 0),
        other => panic!("expected a nonzero exit, got {other:?}"),
    }
    let writes_p0 = trace.syscalls.iter().any(|s| {
        s.classification == SyscallClass::Write && s.touched_path.as_deref() == Some("p0")
    });
    assert!(!writes_p0, "unexpected write-class call: {:?}", trace.syscalls);
    assert!(trace.fs_diff.is_empty(), "diff: {:?}", trace.fs_diff);
}

#[test]
fn mkdir_on_nonexistent_creates_a_directory() {
    // [PAPER] §4.3 example: mkdir p0 → directory_created.
    let cfg = config(
        &["mkdir", "p0"],
        env_one("p0", PathKind::Relative, PointerKind::Nonexistent),
        &[(1, "p0")],
    );
    let trace = run_config(&cfg, SandboxMode::Copy, &limits(), &table());
    assert_eq!(trace.exit_status, ExitStatus::Exited { code: 0 });
    assert_eq!(trace.fs_diff.len(), 1);
    assert_eq!(trace.fs_diff[0].change, ChangeKind::DirectoryCreated);
}

#[test]
fn noop_command_has_an_empty_diff() {
    // [TRIVIAL]
    let cfg = config(
        &["true"],
        env_one("p0", PathKind::Relative, PointerKind::File),
        &[],
    );
    let trace = run_config(&cfg, SandboxMode::Copy, &limits(), &table());
    assert_eq!(trace.exit_status, ExitStatus::Exited { code: 0 });
    assert!(trace.fs_diff.is_empty());
}

#[test]
fn absolute_path_slots_resolve_under_the_scratch_root() {
    // [DERIVED] rm of an absolute path still lands inside the sandbox.
    let cfg = config(
        &["rm", "p0"],
        env_one("p0", PathKind::Absolute, PointerKind::File),
        &[(1, "p0")],
    );
    let handle = setup_sandbox(&cfg.env, SandboxMode::Copy).unwrap();
    let argv = resolve_argv(&cfg, &handle);
    assert!(argv[1].starts_with('/'), "{argv:?}");
    let trace = run_config(&cfg, SandboxMode::Copy, &limits(), &table());
    assert_eq!(trace.exit_status, ExitStatus::Exited { code: 0 });
    assert_eq!(
        trace.fs_diff,
        vec![sandbox::FsDiffEntry {
            path: "p0".into(),
            change: ChangeKind::FileRemoved
        }]
    );
}

#[test]
fn stdin_payload_reaches_the_command() {
    // [TRIVIAL] cat copies its stdin to stdout.
    let handle = setup_sandbox(&FsState::empty(), SandboxMode::Copy).unwrap();
    let trace = trace_execution(
        &handle,
        &["cat".to_string()],
        Some(b"hello stream\n"),
        &limits(),
        &table(),
    )
    .unwrap();
    assert_eq!(trace.exit_status, ExitStatus::Exited { code: 0 });
    assert_eq!(trace.stdout_bytes, b"hello stream\n");
}

#[test]
fn missing_stdin_is_an_empty_stream() {
    // [TRIVIAL] design decision: cat must not block without a sample.
    let handle = setup_sandbox(&FsState::empty(), SandboxMode::Copy).unwrap();
    let trace = trace_execution(&handle, &["cat".to_string()], None, &limits(), &table()).unwrap();
    assert_eq!(trace.exit_status, ExitStatus::Exited { code: 0 });
    assert!(trace.stdout_bytes.is_empty());
}

#[test]
fn pwd_trace_contains_a_getcwd_probe() {
    // [PAPER] §6.3's cwd rule depends on observing getcwd.
    let handle = setup_sandbox(&FsState::empty(), SandboxMode::Copy).unwrap();
    let trace = trace_execution(&handle, &["pwd".to_string()], None, &limits(), &table()).unwrap();
    assert_eq!(trace.exit_status, ExitStatus::Exited { code: 0 });
    assert!(
        trace
            .syscalls
            .iter()
            .any(|s| s.name == "getcwd" && s.classification == SyscallClass::Probe),
        "{:?}",
        trace.syscalls
    );
}

#[test]
fn timeout_yields_a_truncated_trace_with_marker() {
    // [TRIVIAL] timeout path: a sleeping command is killed at the limit.
    let handle = setup_sandbox(&FsState::empty(), SandboxMode::Copy).unwrap();
    let tight = TraceLimits {
        timeout: Duration::from_millis(300),
        ..TraceLimits::default()
    };
    let trace = trace_execution(
        &handle,
        &["sleep".to_string(), "30".to_string()],
        None,
        &tight,
        &table(),
    )
    .unwrap();
    assert!(trace.truncated);
    assert_eq!(trace.error.as_deref(), Some("wall-clock timeout exceeded"));
    assert!(matches!(trace.exit_status, ExitStatus::Signaled { .. }));
}

#[test]
fn exec_failure_is_a_distinct_error_class() {
    // [TRIVIAL]
    let handle = setup_sandbox(&FsState::empty(), SandboxMode::Copy).unwrap();
    let trace = trace_execution(
        &handle,
        &["no-such-binary-zyzzogeton".to_string()],
        None,
        &limits(),
        &table(),
    )
    .unwrap();
    assert!(matches!(trace.exit_status, ExitStatus::ExecFailure { .. }));
}

#[test]
fn batch_isolates_failures_and_orders_by_config_id() {
    // [TRIVIAL] isolation contract: one bad config, the rest succeed.
    let mut configs = Vec::new();
    for i in 0..9 {
        configs.push(config(
            &["true", &format!("arg{i}")],
            FsState::empty(),
            &[],
        ));
    }
    configs.push(config(&["no-such-binary-zyzzogeton"], FsState::empty(), &[]));
    let traces = run_batch(&configs, 4, SandboxMode::Copy, &limits(), &table());
    assert_eq!(traces.len(), 10);
    let mut ids: Vec<_> = traces.iter().map(|t| t.config_id.clone()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted, "batch output must be ordered by config_id");
    ids.dedup();
    assert_eq!(ids.len(), 10);
    let failures = traces
        .iter()
        .filter(|t| !matches!(t.exit_status, ExitStatus::Exited { code: 0 }))
        .count();
    assert_eq!(failures, 1);
}

#[test]
fn parallel_batch_equals_sequential_batch() {
    // [DERIVED] sequential-run equivalence oracle: everything except the
    // timing field must match between workers=1 and workers=8.
    let pointers = [
        PointerKind::File,
        PointerKind::DirEmpty,
        PointerKind::Nonexistent,
    ];
    let mut configs = Vec::new();
    for pointer in pointers {
        for argv0 in ["rm", "mkdir", "rmdir"] {
            configs.push(config(
                &[argv0, "p0"],
                env_one("p0", PathKind::Relative, pointer),
                &[(1, "p0")],
            ));
        }
    }
    // Project out run-specific fields: wall-clock duration and raw
    // scalar argument renderings (stack/heap addresses vary per run even
    // sequentially). Behavior — names, classifications, paths, return
    // values, diffs, output bytes — must match exactly.
    type Projected = (
        String,
        ExitStatus,
        Vec<(String, SyscallClass, Option<String>, i64)>,
        Vec<sandbox::FsDiffEntry>,
        Vec<u8>,
        Vec<u8>,
    );
    let strip = |traces: Vec<sandbox::ExecutionTrace>| -> Vec<Projected> {
        traces
            .into_iter()
            .map(|t| {
                (
                    t.config_id,
                    t.exit_status,
                    t.syscalls
                        .into_iter()
                        .map(|s| (s.name, s.classification, s.touched_path, s.return_value))
                        .collect(),
                    t.fs_diff,
                    t.stdout_bytes,
                    t.stderr_bytes,
                )
            })
            .collect()
    };
    let sequential = strip(run_batch(&configs, 1, SandboxMode::Copy, &limits(), &table()));
    let parallel = strip(run_batch(&configs, 8, SandboxMode::Copy, &limits(), &table()));
    assert_eq!(sequential, parallel);
}

/// Recursive digest of a directory tree: paths, kinds, and contents.
fn tree_digest(root: &std::path::Path) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    let mut entries: Vec<_> = walkdir::WalkDir::new(root)
        .into_iter()
        .map(|e| e.unwrap())
        .collect();
    entries.sort_by(|a, b| a.path().cmp(b.path()));
    for entry in entries {
        hasher.update(entry.path().as_os_str().as_encoded_bytes());
        if entry.file_type().is_file() {
            hasher.update(std::fs::read(entry.path()).unwrap());
        }
    }
    hex::encode(hasher.finalize())
}

fn sentinel_tree() -> tempfile::TempDir {
    let sentinel = tempfile::tempdir().unwrap();
    std::fs::write(sentinel.path().join("a.txt"), "alpha").unwrap();
    std::fs::create_dir(sentinel.path().join("nested")).unwrap();
    std::fs::write(sentinel.path().join("nested/b.txt"), "beta").unwrap();
    sentinel
}

#[test]
fn copy_mode_never_leaks_onto_the_host() {
    // [DERIVED] host-tree digest before/after oracle (zero tolerance).
    let sentinel = sentinel_tree();
    let before = tree_digest(sentinel.path());

    let destructive = config(
        &["sh", "-c", "rm -rf ./* ; touch created_inside"],
        env_one("p0", PathKind::Relative, PointerKind::DirOneChild),
        &[],
    );
    let trace = run_config(&destructive, SandboxMode::Copy, &limits(), &table());
    assert!(matches!(trace.exit_status, ExitStatus::Exited { .. }));
    assert!(
        trace
            .fs_diff
            .iter()
            .any(|e| e.path == "created_inside" && e.change == ChangeKind::FileCreated),
        "{:?}",
        trace.fs_diff
    );

    assert_eq!(before, tree_digest(sentinel.path()));
}

#[test]
fn overlay_mode_matches_copy_mode_and_never_leaks() {
    if !overlay_available() {
        eprintln!("skipping: overlay sandbox unavailable on this host");
        return;
    }
    let sentinel = sentinel_tree();
    let before = tree_digest(sentinel.path());

    // same rm-on-file observation as copy mode
    let cfg = config(
        &["rm", "p0"],
        env_one("p0", PathKind::Relative, PointerKind::File),
        &[(1, "p0")],
    );
    let overlay = run_config(&cfg, SandboxMode::Overlay, &limits(), &table());
    let copy = run_config(&cfg, SandboxMode::Copy, &limits(), &table());
    assert_eq!(overlay.exit_status, copy.exit_status);
    assert_eq!(overlay.fs_diff, copy.fs_diff);

    // a destructive command with absolute sandbox paths stays contained
    let destructive = config(
        &["sh", "-c", "rm -rf /scratch/* && touch /etc/sandbox_marker"],
        env_one("p0", PathKind::Relative, PointerKind::DirOneChild),
        &[],
    );
    let trace = run_config(&destructive, SandboxMode::Overlay, &limits(), &table());
    assert_eq!(trace.exit_status, ExitStatus::Exited { code: 0 });
    assert!(
        trace
            .fs_diff
            .iter()
            .any(|e| e.path == "p0" && e.change == ChangeKind::DirectoryRemoved),
        "{:?}",
        trace.fs_diff
    );
    assert!(
        trace
            .fs_diff
            .iter()
            .any(|e| e.path == "/etc/sandbox_marker" && e.change == ChangeKind::FileCreated),
        "{:?}",
        trace.fs_diff
    );
    assert!(!std::path::Path::new("/etc/sandbox_marker").exists());
    assert_eq!(before, tree_digest(sentinel.path()));
}

#[test]
fn overlay_sandbox_sees_devices_and_fresh_proc() {
    if !overlay_available() {
        eprintln!("skipping: overlay sandbox unavailable on this host");
        return;
    }
    let handle = setup_sandbox(&FsState::empty(), SandboxMode::Overlay).unwrap();
    let trace = trace_execution(
        &handle,
        &[
            "sh".to_string(),
            "-c".to_string(),
            "test -c /dev/null && test -r /proc/self/status && echo ok".to_string(),
        ],
        None,
        &limits(),
        &table(),
    )
    .unwrap();
    assert_eq!(trace.exit_status, ExitStatus::Exited { code: 0 }, "{trace:?}");
    assert_eq!(trace.stdout_bytes, b"ok\n");
    assert!(diff_filesystem(&handle).unwrap().is_empty());
}
