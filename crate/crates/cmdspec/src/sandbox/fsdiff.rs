//! Filesystem diff classification.
//!
//! Copy mode compares a pre-execution manifest against the post state of
//! the scratch tree. Overlay mode traverses only the upperdir and
//! classifies each entry against the read-only lower view (whiteout
//! device nodes mark removals). Both produce the same seven-category
//! [`FsDiffEntry`] vocabulary.

use std::collections::BTreeMap;
use std::fs;
use std::os::unix::fs::FileTypeExt;
use std::os::unix::fs::MetadataExt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    FileCreated,
    FileModified,
    FileRemoved,
    FileReplacedWithDirectory,
    DirectoryCreated,
    DirectoryRemoved,
    DirectoryReplacedWithFile,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FsDiffEntry {
    /// Path relative to the sandbox scratch root (or an absolute host
    /// path for overlay changes outside the scratch area).
    pub path: String,
    pub change: ChangeKind,
}

/// Snapshot entry: directories by presence, files by content digest.
/// Symlinks are treated as files whose content is their target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifestEntry {
    File { digest: [u8; 32] },
    Dir,
}

pub type Manifest = BTreeMap<String, ManifestEntry>;

fn digest_file(path: &Path) -> std::io::Result<[u8; 32]> {
    let mut hasher = Sha256::new();
    let meta = fs::symlink_metadata(path)?;
    if meta.file_type().is_symlink() {
        let target = fs::read_link(path)?;
        hasher.update(b"symlink:");
        hasher.update(target.as_os_str().as_encoded_bytes());
    } else if meta.is_file() {
        let mut file = fs::File::open(path)?;
        std::io::copy(&mut file, &mut hasher)?;
    } else {
        // sockets, fifos, devices: digest the type tag so replacing a
        // file with one of these registers as a modification
        hasher.update(b"special");
    }
    Ok(hasher.finalize().into())
}

/// Recursive snapshot of `root`. Paths are `/`-separated and relative;
/// the root itself is not listed.
pub fn scan_manifest(root: &Path) -> std::io::Result<Manifest> {
    let mut manifest = Manifest::new();
    if !root.exists() {
        return Ok(manifest);
    }
    for entry in walkdir::WalkDir::new(root).min_depth(1).follow_links(false) {
        let entry = entry.map_err(std::io::Error::other)?;
        let rel = entry
            .path()
            .strip_prefix(root)
            .expect("walkdir stays under root")
            .to_string_lossy()
            .into_owned();
        let kind = if entry.file_type().is_dir() {
            ManifestEntry::Dir
        } else {
            ManifestEntry::File {
                digest: digest_file(entry.path())?,
            }
        };
        manifest.insert(rel, kind);
    }
    Ok(manifest)
}

/// Classifies every divergence between two manifests into exactly one
/// of the seven categories.
pub fn diff_manifests(pre: &Manifest, post: &Manifest) -> Vec<FsDiffEntry> {
    use ManifestEntry::*;
    let mut out = Vec::new();
    for (path, before) in pre {
        let change = match (before, post.get(path)) {
            (File { .. }, None) => Some(ChangeKind::FileRemoved),
            (Dir, None) => Some(ChangeKind::DirectoryRemoved),
            (File { digest: a }, Some(File { digest: b })) if a != b => {
                Some(ChangeKind::FileModified)
            }
            (File { .. }, Some(Dir)) => Some(ChangeKind::FileReplacedWithDirectory),
            (Dir, Some(File { .. })) => Some(ChangeKind::DirectoryReplacedWithFile),
            _ => None,
        };
        if let Some(change) = change {
            out.push(FsDiffEntry {
                path: path.clone(),
                change,
            });
        }
    }
    for (path, after) in post {
        if pre.contains_key(path) {
            continue;
        }
        out.push(FsDiffEntry {
            path: path.clone(),
            change: match after {
                File { .. } => ChangeKind::FileCreated,
                Dir => ChangeKind::DirectoryCreated,
            },
        });
    }
    out.sort();
    out
}

fn is_whiteout(meta: &fs::Metadata) -> bool {
    meta.file_type().is_char_device() && meta.rdev() == 0
}

fn lower_kind(lower: &Path) -> Option<ManifestEntry> {
    let meta = fs::symlink_metadata(lower).ok()?;
    if meta.is_dir() {
        Some(ManifestEntry::Dir)
    } else {
        Some(ManifestEntry::File {
            digest: digest_file(lower).unwrap_or([0; 32]),
        })
    }
}

/// Overlay diff: walks only the upperdir ("only the upperdir needs to be
/// traversed"), consulting the lower view per entry. `prefix` seeds the
/// reported paths ("" for the scratch tree, "/etc" for a host overlay).
pub fn diff_upperdir(upper: &Path, lower: &Path, prefix: &str) -> std::io::Result<Vec<FsDiffEntry>> {
    let mut out = Vec::new();
    if upper.exists() {
        walk_upper(upper, lower, prefix, false, &mut out)?;
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn join_rel(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}/{name}")
    }
}

fn opaque_dir(path: &Path) -> bool {
    // an opaque upper directory hides the whole lower directory
    use std::ffi::CString;
    use std::os::unix::ffi::OsStrExt;
    let Ok(cpath) = CString::new(path.as_os_str().as_bytes()) else {
        return false;
    };
    let attr = c"trusted.overlay.opaque";
    let mut buf = [0u8; 4];
    let n = unsafe {
        libc::lgetxattr(
            cpath.as_ptr(),
            attr.as_ptr(),
            buf.as_mut_ptr().cast(),
            buf.len(),
        )
    };
    n == 1 && buf[0] == b'y'
}

fn walk_upper(
    upper: &Path,
    lower: &Path,
    rel: &str,
    lower_hidden: bool,
    out: &mut Vec<FsDiffEntry>,
) -> std::io::Result<()> {
    for entry in fs::read_dir(upper)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let upath = entry.path();
        let lpath = lower.join(&name);
        let epath = join_rel(rel, &name);
        let meta = fs::symlink_metadata(&upath)?;
        let lower_entry = if lower_hidden { None } else { lower_kind(&lpath) };

        if is_whiteout(&meta) {
            match lower_entry {
                Some(ManifestEntry::File { .. }) => out.push(FsDiffEntry {
                    path: epath,
                    change: ChangeKind::FileRemoved,
                }),
                Some(ManifestEntry::Dir) => {
                    out.push(FsDiffEntry {
                        path: epath.clone(),
                        change: ChangeKind::DirectoryRemoved,
                    });
                    // descendants of a whited-out lower directory are
                    // gone too; report them so both modes agree
                    for (sub, kind) in scan_manifest(&lpath)? {
                        out.push(FsDiffEntry {
                            path: join_rel(&epath, &sub),
                            change: match kind {
                                ManifestEntry::File { .. } => ChangeKind::FileRemoved,
                                ManifestEntry::Dir => ChangeKind::DirectoryRemoved,
                            },
                        });
                    }
                }
                None => {}
            }
            continue;
        }

        if meta.is_dir() {
            let opaque = opaque_dir(&upath);
            match lower_entry {
                Some(ManifestEntry::Dir) if !opaque => {
                    // pass-through directory: only children changed
                    walk_upper(&upath, &lpath, &epath, false, out)?;
                }
                Some(ManifestEntry::Dir) => {
                    // opaque: lower children are all hidden
                    for (sub, kind) in scan_manifest(&lpath)? {
                        out.push(FsDiffEntry {
                            path: join_rel(&epath, &sub),
                            change: match kind {
                                ManifestEntry::File { .. } => ChangeKind::FileRemoved,
                                ManifestEntry::Dir => ChangeKind::DirectoryRemoved,
                            },
                        });
                    }
                    walk_upper(&upath, &lpath, &epath, true, out)?;
                }
                Some(ManifestEntry::File { .. }) => {
                    out.push(FsDiffEntry {
                        path: epath.clone(),
                        change: ChangeKind::FileReplacedWithDirectory,
                    });
                    walk_upper(&upath, &lpath, &epath, true, out)?;
                }
                None => {
                    out.push(FsDiffEntry {
                        path: epath.clone(),
                        change: ChangeKind::DirectoryCreated,
                    });
                    walk_upper(&upath, &lpath, &epath, true, out)?;
                }
            }
        } else {
            let udigest = digest_file(&upath).unwrap_or([0xff; 32]);
            match lower_entry {
                Some(ManifestEntry::File { digest }) => {
                    // copy-up happens on any metadata touch; only report
                    // a modification when the content really changed
                    if digest != udigest {
                        out.push(FsDiffEntry {
                            path: epath,
                            change: ChangeKind::FileModified,
                        });
                    }
                }
                Some(ManifestEntry::Dir) => {
                    out.push(FsDiffEntry {
                        path: epath.clone(),
                        change: ChangeKind::DirectoryReplacedWithFile,
                    });
                    for (sub, kind) in scan_manifest(&lpath)? {
                        out.push(FsDiffEntry {
                            path: join_rel(&epath, &sub),
                            change: match kind {
                                ManifestEntry::File { .. } => ChangeKind::FileRemoved,
                                ManifestEntry::Dir => ChangeKind::DirectoryRemoved,
                            },
                        });
                    }
                }
                None => out.push(FsDiffEntry {
                    path: epath,
                    change: ChangeKind::FileCreated,
                }),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(digest: u8) -> ManifestEntry {
        ManifestEntry::File {
            digest: [digest; 32],
        }
    }

    #[test]
    fn all_seven_categories_from_manifest_pairs() {
        // [TRIVIAL] one constructed pre/post pair per category.
        let mut pre = Manifest::new();
        let mut post = Manifest::new();
        post.insert("created".into(), file(1)); // file_created
        pre.insert("modified".into(), file(1));
        post.insert("modified".into(), file(2)); // file_modified
        pre.insert("removed".into(), file(1)); // file_removed
        pre.insert("f2d".into(), file(1));
        post.insert("f2d".into(), ManifestEntry::Dir); // file_replaced_with_directory
        post.insert("newdir".into(), ManifestEntry::Dir); // directory_created
        pre.insert("olddir".into(), ManifestEntry::Dir); // directory_removed
        pre.insert("d2f".into(), ManifestEntry::Dir);
        post.insert("d2f".into(), file(1)); // directory_replaced_with_file
        pre.insert("same".into(), file(9));
        post.insert("same".into(), file(9)); // unchanged: no entry

        let diff = diff_manifests(&pre, &post);
        let expect = |p: &str, c: ChangeKind| {
            assert!(
                diff.iter().any(|e| e.path == p && e.change == c),
                "missing {p}: {c:?} in {diff:?}"
            );
        };
        expect("created", ChangeKind::FileCreated);
        expect("modified", ChangeKind::FileModified);
        expect("removed", ChangeKind::FileRemoved);
        expect("f2d", ChangeKind::FileReplacedWithDirectory);
        expect("newdir", ChangeKind::DirectoryCreated);
        expect("olddir", ChangeKind::DirectoryRemoved);
        expect("d2f", ChangeKind::DirectoryReplacedWithFile);
        assert_eq!(diff.len(), 7, "exactly one change per path: {diff:?}");
    }

    #[test]
    fn noop_diff_is_empty() {
        // [TRIVIAL]
        let mut pre = Manifest::new();
        pre.insert("a".into(), file(1));
        pre.insert("d".into(), ManifestEntry::Dir);
        assert!(diff_manifests(&pre, &pre.clone()).is_empty());
    }

    #[test]
    fn scan_and_diff_on_real_trees() {
        // [DERIVED] oracle: mutate a real tree with std::fs and compare
        // against the hand-predicted classification.
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path();
        fs::write(root.join("keep.txt"), "stable").unwrap();
        fs::write(root.join("gone.txt"), "x").unwrap();
        fs::write(root.join("edit.txt"), "before").unwrap();
        fs::create_dir(root.join("sub")).unwrap();
        fs::write(root.join("sub/child"), "y").unwrap();
        let pre = scan_manifest(root).unwrap();

        fs::remove_file(root.join("gone.txt")).unwrap();
        fs::write(root.join("edit.txt"), "after").unwrap();
        fs::write(root.join("new.txt"), "z").unwrap();
        fs::remove_file(root.join("sub/child")).unwrap();
        fs::remove_dir(root.join("sub")).unwrap();
        let post = scan_manifest(root).unwrap();

        let diff = diff_manifests(&pre, &post);
        assert_eq!(
            diff,
            vec![
                FsDiffEntry {
                    path: "edit.txt".into(),
                    change: ChangeKind::FileModified
                },
                FsDiffEntry {
                    path: "gone.txt".into(),
                    change: ChangeKind::FileRemoved
                },
                FsDiffEntry {
                    path: "new.txt".into(),
                    change: ChangeKind::FileCreated
                },
                FsDiffEntry {
                    path: "sub".into(),
                    change: ChangeKind::DirectoryRemoved
                },
                FsDiffEntry {
                    path: "sub/child".into(),
                    change: ChangeKind::FileRemoved
                },
            ]
        );
    }

    #[test]
    fn symlink_targets_participate_in_digests() {
        // [DERIVED] retargeting a symlink must register as file_modified.
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path();
        std::os::unix::fs::symlink("a", root.join("ln")).unwrap();
        let pre = scan_manifest(root).unwrap();
        fs::remove_file(root.join("ln")).unwrap();
        std::os::unix::fs::symlink("b", root.join("ln")).unwrap();
        let post = scan_manifest(root).unwrap();
        assert_eq!(
            diff_manifests(&pre, &post),
            vec![FsDiffEntry {
                path: "ln".into(),
                change: ChangeKind::FileModified
            }]
        );
    }
}
