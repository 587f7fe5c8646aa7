//! CSV ingestion, distance thresholding and report writers.
//!
//! Input formats:
//! - `nodes.csv`: header `id,group[,sampled]`, `sampled` in `{0,1}` (default 1).
//! - `edges.csv`: header `id_a,id_b`; edges may only join sampled nodes.
//! - distance matrix: first row and column hold ids, the body is numeric.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::GroupConfig;
use crate::error::{Error, Result};
use crate::graph::{GroupedNetwork, NodeId};
use crate::sampling::SampleIndex;

/// Largest tolerated `|d_ij - d_ji|` in a distance matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, row: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        row: row as usize,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map_or(0, csv::Position::line);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.display().to_string(),
            source,
        },
        kind => parse_err(path, row, format!("{kind:?}")),
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

/// A partially observed network as loaded from disk. The network holds every
/// listed node; only edges among sampled nodes are known.
#[derive(Debug, Clone)]
pub struct ObservedDataset {
    pub network: GroupedNetwork,
    pub sampled: Vec<bool>,
    /// Edge rows dropped as repeats of an earlier row (either orientation).
    pub duplicate_edges: usize,
}

/// How one group's population size and sampling proportion were obtained.
#[derive(Debug, Clone, Serialize)]
pub struct PopulationChoice {
    pub group: String,
    pub n: usize,
    pub population: usize,
    pub p: f64,
    pub source: &'static str,
}

impl ObservedDataset {
    pub fn sampled_groups(&self) -> Vec<Vec<NodeId>> {
        (0..self.network.num_groups())
            .map(|g| {
                self.network
                    .group_members(g)
                    .map(|m| m.iter().copied().filter(|&i| self.sampled[i]).collect())
                    .unwrap_or_default()
            })
            .collect()
    }

    /// Resolve `N_r` and `p_r` per group and build the observed sample.
    ///
    /// A config entry gives exactly one of `size` (then `p = n/N`) or `p`
    /// (then `N = ceil(n/p)`). Groups without an entry use the node table:
    /// `N` is the number of listed nodes, which requires unsampled rows.
    pub fn sample_index(&self, groups: &[GroupConfig]) -> Result<(SampleIndex, Vec<PopulationChoice>)> {
        let net = &self.network;
        let observed = self.sampled_groups();
        let by_name: HashMap<&str, &GroupConfig> =
            groups.iter().map(|g| (g.name.as_str(), g)).collect();
        for g in groups {
            if !net.group_names().contains(&g.name) {
                return Err(Error::Config(format!("config group {} not present in node table", g.name)));
            }
        }
        let mut choices = Vec::with_capacity(net.num_groups());
        for (g, name) in net.group_names().iter().enumerate() {
            let n = observed[g].len();
            let listed = net.group_members(g)?.len();
            if n == 0 {
                return Err(Error::Input(format!("group {name} has no sampled nodes")));
            }
            let choice = match by_name.get(name.as_str()) {
                Some(cfg) => {
                    if let Some(expected) = cfg.n {
                        if expected != n {
                            return Err(Error::Input(format!(
                                "group {name}: config says n = {expected}, data has {n} sampled nodes"
                            )));
                        }
                    }
                    match (cfg.size, cfg.p) {
                        (Some(big_n), None) => PopulationChoice {
                            group: name.clone(),
                            n,
                            population: big_n,
                            p: n as f64 / big_n as f64,
                            source: "p = n/N from configured N",
                        },
                        (None, Some(p)) => {
                            if !(p > 0.0 && p <= 1.0) {
                                return Err(Error::Config(format!("group {name}: p {p} outside (0, 1]")));
                            }
                            PopulationChoice {
                                group: name.clone(),
                                n,
                                population: (n as f64 / p - 1e-9).ceil() as usize,
                                p,
                                source: "N = ceil(n/p) from configured p",
                            }
                        }
                        _ => {
                            return Err(Error::Config(format!(
                                "group {name}: give exactly one of size (N) and p"
                            )))
                        }
                    }
                }
                None if listed > n => PopulationChoice {
                    group: name.clone(),
                    n,
                    population: listed,
                    p: n as f64 / listed as f64,
                    source: "N = listed nodes, p = n/N",
                },
                None => {
                    return Err(Error::Config(format!(
                        "group {name}: every listed node is sampled; supply size (N) or p in the config"
                    )))
                }
            };
            if choice.population < n {
                return Err(Error::Config(format!(
                    "group {name}: population {} smaller than sample {n}",
                    choice.population
                )));
            }
            choices.push(choice);
        }
        let p: Vec<f64> = choices.iter().map(|c| c.p).collect();
        let sizes = choices.iter().map(|c| c.population).collect();
        Ok((SampleIndex::observed(net, observed, &p, sizes)?, choices))
    }
}

/// Load `nodes.csv` and `edges.csv` into an [`ObservedDataset`]. Groups are
/// numbered in order of first appearance in the node table.
pub fn load_nodes_edges(nodes_path: &Path, edges_path: &Path) -> Result<ObservedDataset> {
    let mut rdr = open_csv(nodes_path)?;
    let headers = rdr.headers().map_err(|e| csv_err(nodes_path, e))?.clone();
    let (Some(id_col), Some(group_col)) = (column(&headers, "id"), column(&headers, "group")) else {
        return Err(parse_err(nodes_path, 1, "header must contain id and group"));
    };
    let sampled_col = column(&headers, "sampled");

    let mut index: HashMap<String, NodeId> = HashMap::new();
    let mut labels = Vec::new();
    let mut group_names: Vec<String> = Vec::new();
    let mut group_of = Vec::new();
    let mut sampled = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(nodes_path, e))?;
        let row = record.position().map_or(0, csv::Position::line);
        let id = record.get(id_col).unwrap_or("");
        if id.is_empty() {
            return Err(parse_err(nodes_path, row, "missing node id"));
        }
        let group = record.get(group_col).unwrap_or("");
        if group.is_empty() {
            return Err(parse_err(nodes_path, row, format!("node {id}: missing group label")));
        }
        let flag = match sampled_col.map(|c| record.get(c).unwrap_or("")) {
            None | Some("1") => true,
            Some("0") => false,
            Some(other) => {
                return Err(parse_err(nodes_path, row, format!("sampled must be 0 or 1, got {other:?}")))
            }
        };
        if index.insert(id.to_string(), labels.len()).is_some() {
            return Err(parse_err(nodes_path, row, format!("duplicate node id {id}")));
        }
        labels.push(id.to_string());
        let g = match group_names.iter().position(|n| n == group) {
            Some(g) => g,
            None => {
                group_names.push(group.to_string());
                group_names.len() - 1
            }
        };
        group_of.push(g);
        sampled.push(flag);
    }
    if labels.is_empty() {
        return Err(parse_err(nodes_path, 1, "node table is empty"));
    }

    let mut edges = BTreeSet::new();
    let mut duplicate_edges = 0;
    let mut rdr = open_csv(edges_path)?;
    let headers = rdr.headers().map_err(|e| csv_err(edges_path, e))?.clone();
    if !headers.is_empty() {
        let (Some(a_col), Some(b_col)) = (column(&headers, "id_a"), column(&headers, "id_b")) else {
            return Err(parse_err(edges_path, 1, "header must contain id_a and id_b"));
        };
        for record in rdr.records() {
            let record = record.map_err(|e| csv_err(edges_path, e))?;
            let row = record.position().map_or(0, csv::Position::line);
            let lookup = |col: usize| {
                let id = record.get(col).unwrap_or("");
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| parse_err(edges_path, row, format!("unknown node {id:?}")))
            };
            let (a, b) = (lookup(a_col)?, lookup(b_col)?);
            if a == b {
                return Err(parse_err(edges_path, row, format!("self-loop on node {}", labels[a])));
            }
            for x in [a, b] {
                if !sampled[x] {
                    return Err(parse_err(
                        edges_path,
                        row,
                        format!("edge touches unsampled node {}", labels[x]),
                    ));
                }
            }
            if !edges.insert((a.min(b), a.max(b))) {
                duplicate_edges += 1;
            }
        }
    }
    if duplicate_edges > 0 {
        log::warn!("{}: collapsed {duplicate_edges} duplicate edge rows", edges_path.display());
    }
    let network = GroupedNetwork::new(group_names.len(), group_of, edges)?
        .with_group_names(group_names)?
        .with_node_labels(labels)?;
    Ok(ObservedDataset {
        network,
        sampled,
        duplicate_edges,
    })
}

/// Edge list implied by thresholding a distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceEdges {
    pub ids: Vec<String>,
    /// `(i, j)` with `i < j` and `d_ij < c`, in row-major order.
    pub edges: Vec<(usize, usize)>,
}

impl DistanceEdges {
    pub fn labelled(&self) -> Vec<(&str, &str)> {
        self.edges
            .iter()
            .map(|&(i, j)| (self.ids[i].as_str(), self.ids[j].as_str()))
            .collect()
    }
}

/// Edge `(i, j)` iff `d_ij < c` (strict).
pub fn distances_to_edges(matrix_path: &Path, c: f64) -> Result<DistanceEdges> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Input(format!("threshold {c} must be positive and finite")));
    }
    let file = File::open(matrix_path).map_err(io_err(matrix_path))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_err(matrix_path, e))?,
        None => return Err(parse_err(matrix_path, 1, "empty matrix file")),
    };
    let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let k = ids.len();
    let mut d = Vec::with_capacity(k);
    for record in records {
        let record = record.map_err(|e| csv_err(matrix_path, e))?;
        let row = record.position().map_or(0, csv::Position::line);
        if d.len() == k {
            return Err(parse_err(matrix_path, row, format!("more than {k} rows: matrix is not square")));
        }
        if record.len() != k + 1 {
            return Err(parse_err(
                matrix_path,
                row,
                format!("{} values for {k} columns: matrix is not square", record.len().saturating_sub(1)),
            ));
        }
        let id = record.get(0).unwrap_or("");
        if id != ids[d.len()] {
            return Err(parse_err(
                matrix_path,
                row,
                format!("row id {id:?} does not match column id {:?}", ids[d.len()]),
            ));
        }
        let values = record
            .iter()
            .skip(1)
            .map(|x| match x.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(matrix_path, row, format!("non-numeric distance {x:?}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        d.push(values);
    }
    if d.len() != k {
        return Err(parse_err(
            matrix_path,
            d.len() as u64 + 1,
            format!("{} rows for {k} columns: matrix is not square", d.len()),
        ));
    }
    let mut edges = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            if (d[i][j] - d[j][i]).abs() > SYMMETRY_TOLERANCE {
                return Err(Error::Input(format!(
                    "asymmetric distances between {} and {}: {} vs {}",
                    ids[i], ids[j], d[i][j], d[j][i]
                )));
            }
            if d[i][j] < c {
                edges.push((i, j));
            }
        }
    }
    Ok(DistanceEdges { ids, edges })
}

/// Shortest round-trip decimal form; empty for missing values.
pub fn fmt_f64(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_default()
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(io_err(path))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn flush(path: &Path, mut w: csv::Writer<File>) -> Result<()> {
    w.flush().map_err(io_err(path))
}

/// `id,group,sampled` for every node.
pub fn write_nodes_csv(path: &Path, net: &GroupedNetwork, sampled: &[bool]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut put = |rec: &[&str]| w.write_record(rec).map_err(|e| csv_err(path, e));
    put(&["id", "group", "sampled"])?;
    for i in 0..net.num_nodes() {
        let g = net.group_of(i)?;
        put(&[&net.node_label(i), &net.group_names()[g], if sampled[i] { "1" } else { "0" }])?;
    }
    flush(path, w)
}

/// `id_a,id_b` for every edge whose endpoints both pass `keep`.
pub fn write_edges_csv(path: &Path, net: &GroupedNetwork, keep: impl Fn(NodeId) -> bool) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["id_a", "id_b"]).map_err(|e| csv_err(path, e))?;
    for &(a, b) in net.edges() {
        if keep(a) && keep(b) {
            w.write_record([net.node_label(a), net.node_label(b)])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    flush(path, w)
}

pub fn write_labelled_edges(path: &Path, edges: &[(&str, &str)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["id_a", "id_b"]).map_err(|e| csv_err(path, e))?;
    for (a, b) in edges {
        w.write_record([a, b]).map_err(|e| csv_err(path, e))?;
    }
    flush(path, w)
}

/// Write a table of already formatted cells.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    flush(path, w)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub args: Vec<String>,
    pub software_version: String,
    pub seed: u64,
    pub resolved_config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub notes: Vec<String>,
    /// Wall-clock seconds per phase; only recorded on request so that
    /// manifests of identical runs stay identical.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<(String, f64)>>,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, seed: u64, resolved_config: serde_json::Value) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            command: command.to_string(),
            args,
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            resolved_config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
            timings: None,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Record `name` inside `dir` by its bare file name.
    pub fn add_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        self.outputs.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_file(&dir.join(name))?,
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn loads_nodes_and_edges() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = file(&dir, "n.csv", "id,group,sampled\na,x,1\nb,x,1\nc,y,1\nd,y,0\n");
        let edges = file(&dir, "e.csv", "id_a,id_b\na,c\nc,a\nb,a\n");
        let ds = load_nodes_edges(&nodes, &edges).unwrap();
        assert_eq!(ds.network.num_nodes(), 4);
        assert_eq!(ds.network.num_edges(), 2);
        assert_eq!(ds.duplicate_edges, 1);
        assert_eq!(ds.network.group_names(), ["x", "y"]);
        assert_eq!(ds.sampled_groups(), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn empty_edge_file_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = file(&dir, "n.csv", "id,group\na,x\nb,x\n");
        for body in ["id_a,id_b\n", ""] {
            let edges = file(&dir, "e.csv", body);
            assert_eq!(load_nodes_edges(&nodes, &edges).unwrap().network.num_edges(), 0);
        }
    }

    #[test]
    fn bad_rows_carry_row_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = file(&dir, "n.csv", "id,group\na,x\nb,x\n");
        let edges = file(&dir, "e.csv", "id_a,id_b\na,b\na,zz\n");
        let err = load_nodes_edges(&nodes, &edges).unwrap_err();
        assert!(matches!(&err, Error::Parse { row: 3, message, .. } if message.contains("zz")), "{err}");

        let loop_edges = file(&dir, "l.csv", "id_a,id_b\na,a\n");
        assert!(matches!(load_nodes_edges(&nodes, &loop_edges), Err(Error::Parse { row: 2, .. })));

        let no_group = file(&dir, "g.csv", "id,group\na,x\nb,\n");
        let err = load_nodes_edges(&no_group, &edges).unwrap_err();
        assert!(matches!(&err, Error::Parse { row: 3, message, .. } if message.contains("group")), "{err}");

        let bad_flag = file(&dir, "f.csv", "id,group,sampled\na,x,2\n");
        assert!(load_nodes_edges(&bad_flag, &edges).is_err());

        let unsampled = file(&dir, "u.csv", "id,group,sampled\na,x,1\nb,x,0\n");
        let edges = file(&dir, "e2.csv", "id_a,id_b\na,b\n");
        assert!(load_nodes_edges(&unsampled, &edges).is_err());
    }

    #[test]
    fn population_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("id,group\n");
        for i in 0..363 {
            body.push_str(&format!("m{i},Maunatlala\n"));
        }
        let nodes = file(&dir, "n.csv", &body);
        let edges = file(&dir, "e.csv", "id_a,id_b\n");
        let ds = load_nodes_edges(&nodes, &edges).unwrap();
        let by_p = GroupConfig { name: "Maunatlala".into(), size: None, p: Some(0.52), n: Some(363) };
        let (sample, choices) = ds.sample_index(&[by_p]).unwrap();
        assert_eq!(choices[0].population, 699);
        assert_eq!(sample.population_sizes(), &[699]);

        let by_n = GroupConfig { name: "Maunatlala".into(), size: Some(700), p: None, n: None };
        let (_, choices) = ds.sample_index(&[by_n]).unwrap();
        assert!((choices[0].p - 363.0 / 700.0).abs() < 1e-15);

        let both = GroupConfig { name: "Maunatlala".into(), size: Some(700), p: Some(0.5), n: None };
        assert!(ds.sample_index(&[both]).is_err());
        assert!(ds.sample_index(&[]).is_err());
        let wrong_n = GroupConfig { name: "Maunatlala".into(), size: Some(700), p: None, n: Some(10) };
        assert!(ds.sample_index(&[wrong_n]).is_err());
    }

    #[test]
    fn distance_thresholding() {
        let dir = tempfile::tempdir().unwrap();
        let m = file(&dir, "d.csv", ",a,b,c\na,0,0.05,0.2\nb,0.05,0,0.07\nc,0.2,0.07,0\n");
        let de = distances_to_edges(&m, 0.07).unwrap();
        assert_eq!(de.labelled(), vec![("a", "b")]);
        assert!(distances_to_edges(&m, 0.05).unwrap().edges.is_empty());
        assert!(distances_to_edges(&m, 0.0).is_err());

        let asym = file(&dir, "s.csv", ",a,b\na,0,0.05\nb,0.06,0\n");
        assert!(matches!(distances_to_edges(&asym, 0.07), Err(Error::Input(_))));
        let nan = file(&dir, "x.csv", ",a,b\na,0,NaN\nb,NaN,0\n");
        assert!(matches!(distances_to_edges(&nan, 0.07), Err(Error::Parse { row: 2, .. })));
        let short = file(&dir, "r.csv", ",a,b\na,0,0.05\n");
        assert!(distances_to_edges(&short, 0.07).is_err());
        let ragged = file(&dir, "g.csv", ",a,b\na,0\nb,0,0\n");
        assert!(distances_to_edges(&ragged, 0.07).is_err());
        let mismatch = file(&dir, "m.csv", ",a,b\nb,0,0.05\na,0.05,0\n");
        assert!(distances_to_edges(&mismatch, 0.07).is_err());
    }

    #[test]
    fn float_formatting_round_trips() {
        for x in [0.1, 1.0 / 3.0, 0.0, 1e-300] {
            assert_eq!(fmt_f64(Some(x)).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(None), "");
    }
}
