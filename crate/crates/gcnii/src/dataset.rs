//! On-disk dataset directory: `meta.json`, `edges.tsv`, `features.bin`,
//! `labels.tsv`, `splits.json`.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use gcnii_core::graph::CsrGraph;
use gcnii_core::{GraphError, Matrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const META_FILE: &str = "meta.json";
pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.tsv";
pub const SPLITS_FILE: &str = "splits.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{file} line {line}: {message}")]
    Parse { file: &'static str, line: usize, message: String },
    #[error("{file}: expected {expected}, found {found}")]
    ShapeMismatch { file: &'static str, expected: String, found: String },
    #[error("split {split} {set}: index {index} is out of range for {num_nodes} nodes")]
    InvalidSplitIndex { split: usize, set: &'static str, index: usize, num_nodes: usize },
    #[error("split {split} {set}: node {node} has no label")]
    UnlabeledSplitNode { split: usize, set: &'static str, node: usize },
    #[error("split {split}: node {node} appears in more than one of train/val/test")]
    OverlappingSplit { split: usize, node: usize },
    #[error("splits.json holds no splits")]
    NoSplits,
    #[error("edges.tsv: {0}")]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
}

/// One train/validation/test partition of labeled nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// A loaded, validated dataset. Features are L1 row-normalized.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub name: String,
    pub graph: CsrGraph,
    pub features: Arc<Matrix>,
    /// Class per node, `-1` for unlabeled.
    pub labels: Vec<i64>,
    pub num_classes: usize,
    pub splits: Vec<Split>,
}

impl DatasetBundle {
    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn meta(&self) -> Meta {
        Meta {
            name: self.name.clone(),
            num_nodes: self.num_nodes(),
            num_features: self.num_features(),
            num_classes: self.num_classes,
        }
    }

    /// Labels as class indices; unlabeled nodes map to 0. Only meaningful
    /// for nodes in a split, which are checked to be labeled.
    pub fn class_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l.max(0) as usize).collect()
    }

    /// Checks the invariants `load_dataset` enforces.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let n = self.num_nodes();
        if self.features.rows() != n {
            return Err(DatasetError::ShapeMismatch {
                file: FEATURES_FILE,
                expected: format!("{n} rows"),
                found: format!("{} rows", self.features.rows()),
            });
        }
        if self.labels.len() != n {
            return Err(DatasetError::ShapeMismatch {
                file: LABELS_FILE,
                expected: format!("{n} labels"),
                found: format!("{} labels", self.labels.len()),
            });
        }
        validate_splits(&self.splits, &self.labels)
    }
}

fn validate_splits(splits: &[Split], labels: &[i64]) -> Result<(), DatasetError> {
    if splits.is_empty() {
        return Err(DatasetError::NoSplits);
    }
    let n = labels.len();
    for (si, split) in splits.iter().enumerate() {
        let mut seen = vec![false; n];
        for (set, nodes) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
            for &node in nodes {
                if node >= n {
                    return Err(DatasetError::InvalidSplitIndex {
                        split: si,
                        set,
                        index: node,
                        num_nodes: n,
                    });
                }
                if labels[node] < 0 {
                    return Err(DatasetError::UnlabeledSplitNode { split: si, set, node });
                }
                if std::mem::replace(&mut seen[node], true) {
                    return Err(DatasetError::OverlappingSplit { split: si, node });
                }
            }
        }
    }
    Ok(())
}

/// Scales each row to unit L1 norm; all-zero rows stay zero.
pub fn normalize_rows_l1(features: &mut Matrix) {
    for i in 0..features.rows() {
        let row = features.row_mut(i);
        let sum: f64 = row.iter().map(|v| v.abs()).sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|v| *v /= sum);
        }
    }
}

fn read_text(dir: &Path, file: &str) -> Result<String, DatasetError> {
    let path = dir.join(file);
    match fs::read_to_string(&path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Err(DatasetError::MissingFile(path)),
        Err(source) => Err(DatasetError::Io { path, source }),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, file: &str) -> Result<T, DatasetError> {
    let text = read_text(dir, file)?;
    serde_json::from_str(&text).map_err(|source| DatasetError::Json {
        path: dir.join(file),
        source,
    })
}

/// Non-empty lines split on tabs into exactly two unsigned integers.
fn parse_pairs(text: &str, file: &'static str) -> Result<Vec<(usize, usize)>, DatasetError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| DatasetError::Parse {
            file,
            line: i + 1,
            message,
        };
        let mut fields = line.split('\t');
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(format!("expected two tab-separated fields, got {line:?}")));
        };
        let a = a.parse().map_err(|e| parse_err(format!("{a:?}: {e}")))?;
        let b = b.parse().map_err(|e| parse_err(format!("{b:?}: {e}")))?;
        pairs.push((a, b));
    }
    Ok(pairs)
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<DatasetBundle, DatasetError> {
    let dir = dir.as_ref();
    let meta: Meta = read_json(dir, META_FILE)?;
    let n = meta.num_nodes;

    let edges = parse_pairs(&read_text(dir, EDGES_FILE)?, EDGES_FILE)?;
    let graph = CsrGraph::from_edges(n, &edges)?;

    let features_path = dir.join(FEATURES_FILE);
    let bytes = match fs::read(&features_path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(DatasetError::MissingFile(features_path)),
        Err(source) => return Err(DatasetError::Io { path: features_path, source }),
    };
    let expected = n * meta.num_features * 4;
    if bytes.len() != expected {
        return Err(DatasetError::ShapeMismatch {
            file: FEATURES_FILE,
            expected: format!("{expected} bytes ({n} x {} f32)", meta.num_features),
            found: format!("{} bytes", bytes.len()),
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let mut features = Matrix::from_vec(n, meta.num_features, values).expect("length checked");
    normalize_rows_l1(&mut features);

    let mut labels = vec![-1i64; n];
    for (i, (node, class)) in parse_pairs(&read_text(dir, LABELS_FILE)?, LABELS_FILE)?
        .into_iter()
        .enumerate()
    {
        if node >= n || class >= meta.num_classes {
            return Err(DatasetError::Parse {
                file: LABELS_FILE,
                line: i + 1,
                message: format!(
                    "node {node} / class {class} outside {n} nodes / {} classes",
                    meta.num_classes
                ),
            });
        }
        labels[node] = class as i64;
    }

    let splits: Vec<Split> = read_json(dir, SPLITS_FILE)?;
    validate_splits(&splits, &labels)?;

    Ok(DatasetBundle {
        name: meta.name,
        graph,
        features: Arc::new(features),
        labels,
        num_classes: meta.num_classes,
        splits,
    })
}

/// Writes `bundle` in the directory format. Features are written as they are
/// held (already normalized), narrowed to `f32`.
pub fn save_dataset(bundle: &DatasetBundle, dir: impl AsRef<Path>) -> Result<(), DatasetError> {
    let dir = dir.as_ref();
    let io_err = |path: PathBuf| move |source| DatasetError::Io { path, source };
    fs::create_dir_all(dir).map_err(io_err(dir.to_path_buf()))?;

    let write = |file: &str, contents: &[u8]| {
        let path = dir.join(file);
        fs::write(&path, contents).map_err(io_err(path))
    };
    write(META_FILE, pretty_json(&bundle.meta()).as_bytes())?;
    write(SPLITS_FILE, pretty_json(&bundle.splits).as_bytes())?;

    let mut edges = String::new();
    for (u, v) in bundle.graph.edges() {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    write(EDGES_FILE, edges.as_bytes())?;

    let mut labels = String::new();
    for (node, &class) in bundle.labels.iter().enumerate() {
        if class >= 0 {
            labels.push_str(&format!("{node}\t{class}\n"));
        }
    }
    write(LABELS_FILE, labels.as_bytes())?;

    let path = dir.join(FEATURES_FILE);
    let file = fs::File::create(&path).map_err(io_err(path.clone()))?;
    let mut out = BufWriter::new(file);
    for &v in bundle.features.as_slice() {
        out.write_all(&(v as f32).to_le_bytes()).map_err(io_err(path.clone()))?;
    }
    out.flush().map_err(io_err(path))
}

fn pretty_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

/// Looks for a dataset directory called `name` under `$GCNII_DATA`, then
/// under `data/` at the workspace root.
pub fn find_dataset(name: &str) -> Option<PathBuf> {
    let mut roots = Vec::new();
    if let Some(root) = std::env::var_os("GCNII_DATA") {
        roots.push(PathBuf::from(root));
    }
    roots.push(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    roots
        .into_iter()
        .map(|r| r.join(name))
        .find(|d| d.join(META_FILE).is_file())
}
