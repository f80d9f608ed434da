use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Graph, NodeAnnotations};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const EDGE_FILE: &str = "edges.txt";
pub const FEATURE_FILE: &str = "features.csv";
pub const ANNOTATION_FILE: &str = "annotations.csv";
pub const PROVENANCE_FILE: &str = "provenance.json";

/// The three data files of a dataset directory.
#[derive(Clone, Debug)]
pub struct DatasetFiles {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub annotations: PathBuf,
}

impl DatasetFiles {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            edges: dir.join(EDGE_FILE),
            features: dir.join(FEATURE_FILE),
            annotations: dir.join(ANNOTATION_FILE),
        }
    }

    pub fn load(&self) -> Result<(Graph, NodeAnnotations)> {
        load_graph(&self.edges, &self.features, &self.annotations)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Loads a graph from an edge list, a feature CSV, and an annotation CSV.
///
/// Feature rows define the node set; edges and annotations must agree with it.
pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    annotation_path: &Path,
) -> Result<(Graph, NodeAnnotations)> {
    let features = read_features(feature_path)?;
    let n = features.rows();
    let edges = read_edges(edge_path, n)?;
    let graph = Graph::new(n, edges, features)?;
    let ann = read_annotations(annotation_path)?;
    if ann.len() != n {
        return Err(Error::Consistency(format!(
            "{} has {} rows but {} has {} nodes",
            annotation_path.display(),
            ann.len(),
            feature_path.display(),
            n
        )));
    }
    Ok((graph, ann))
}

fn read_edges(path: &Path, num_nodes: usize) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let ids: Vec<&str> = content.split_whitespace().collect();
        if ids.len() != 2 {
            return Err(parse_err(path, line_no, "expected two node ids"));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(path, line_no, format!("invalid node id {s:?}")))
        };
        let (u, v) = (parse(ids[0])?, parse(ids[1])?);
        if u >= num_nodes || v >= num_nodes {
            return Err(Error::Consistency(format!(
                "{}:{line_no}: edge ({u}, {v}) references a node outside the {num_nodes} feature rows",
                path.display()
            )));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

fn read_features(path: &Path) -> Result<Tensor> {
    let text = read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, i + 1, format!("invalid feature {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("expected {first} columns, found {}", row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 0, "feature file is empty"));
    }
    Tensor::from_rows(&rows)
}

fn read_annotations(path: &Path) -> Result<NodeAnnotations> {
    let text = read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["label", "sensitive"] {
        return Err(parse_err(path, 1, "header must be \"label,sensitive\""));
    }
    let mut labels = Vec::new();
    let mut sensitive = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        let label = match &record[0] {
            "" => None,
            s => Some(
                s.parse::<usize>()
                    .map_err(|_| parse_err(path, line, format!("invalid label {s:?}")))?,
            ),
        };
        let s = record[1]
            .parse::<usize>()
            .map_err(|_| parse_err(path, line, format!("invalid sensitive class {:?}", &record[1])))?;
        labels.push(label);
        sensitive.push(s);
    }
    NodeAnnotations::new(labels, sensitive)
}

/// Writes the three data files plus a JSON provenance sidecar into `dir`.
pub fn write_dataset(
    dir: &Path,
    graph: &Graph,
    ann: &NodeAnnotations,
    provenance: &serde_json::Value,
) -> Result<DatasetFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = DatasetFiles::in_dir(dir);

    let mut edges = String::from("# undirected edge list: u v\n");
    for &(u, v) in graph.edges() {
        writeln!(edges, "{u} {v}").expect("write to string");
    }

    let mut features = String::new();
    for i in 0..graph.num_nodes() {
        let row: Vec<String> = graph.features().row(i).iter().map(f64::to_string).collect();
        features.push_str(&row.join(","));
        features.push('\n');
    }

    let mut annotations = String::from("label,sensitive\n");
    for (label, s) in ann.labels.iter().zip(&ann.sensitive) {
        match label {
            Some(l) => writeln!(annotations, "{l},{s}"),
            None => writeln!(annotations, ",{s}"),
        }
        .expect("write to string");
    }

    let provenance =
        serde_json::to_string_pretty(provenance).map_err(|e| Error::Format(e.to_string()))?;

    for (path, body) in [
        (&files.edges, edges),
        (&files.features, features),
        (&files.annotations, annotations),
        (&dir.join(PROVENANCE_FILE), provenance + "\n"),
    ] {
        fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(files)
}
