use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// A user-item interaction. Node ids place users at `0..I` and items at
/// `I..I+J`; see [`InteractionGraph::item_node`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub user: usize,
    pub item: usize,
}

impl Edge {
    pub fn new(user: usize, item: usize) -> Self {
        Self { user, item }
    }
}

/// Bipartite user-item graph with a deduplicated, sorted edge list.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionGraph {
    n_users: usize,
    n_items: usize,
    edges: Vec<Edge>,
    user_items: Vec<Vec<usize>>,
}

impl InteractionGraph {
    /// Duplicate edges are dropped; ids outside the declared ranges are an error.
    pub fn new(n_users: usize, n_items: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut edges: Vec<Edge> = edges.into_iter().collect();
        for e in &edges {
            if e.user >= n_users || e.item >= n_items {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) outside {n_users} users x {n_items} items",
                    e.user, e.item
                )));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let mut user_items = vec![Vec::new(); n_users];
        for e in &edges {
            user_items[e.user].push(e.item);
        }
        Ok(Self {
            n_users,
            n_items,
            edges,
            user_items,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_items
    }

    pub fn item_node(&self, item: usize) -> usize {
        self.n_users + item
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Items of `user`, sorted ascending.
    pub fn user_items(&self, user: usize) -> &[usize] {
        &self.user_items[user]
    }

    pub fn contains(&self, e: Edge) -> bool {
        e.user < self.n_users && self.user_items[e.user].binary_search(&e.item).is_ok()
    }

    pub fn density(&self) -> f64 {
        self.edges.len() as f64 / (self.n_users as f64 * self.n_items as f64)
    }

    /// Same node sets, different edges.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        Self::new(self.n_users, self.n_items, edges)
    }

    pub fn edge_set(&self) -> HashSet<Edge> {
        self.edges.iter().copied().collect()
    }
}

/// Original dataset ids for re-indexed users and items.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdMap {
    pub users: Vec<u64>,
    pub items: Vec<u64>,
}

impl IdMap {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::from("# kind\tindex\toriginal\n");
        for (i, raw) in self.users.iter().enumerate() {
            out.push_str(&format!("user\t{i}\t{raw}\n"));
        }
        for (i, raw) in self.items.iter().enumerate() {
            out.push_str(&format!("item\t{i}\t{raw}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = IdMap::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: &str| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: message.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [kind, index, raw] = fields[..] else {
                return Err(parse_err("expected kind<TAB>index<TAB>original"));
            };
            let index: usize = index.parse().map_err(|_| parse_err("bad index"))?;
            let raw: u64 = raw.parse().map_err(|_| parse_err("bad original id"))?;
            let target = match kind {
                "user" => &mut map.users,
                "item" => &mut map.items,
                _ => return Err(parse_err("kind must be user or item")),
            };
            if index != target.len() {
                return Err(parse_err("indices must be contiguous"));
            }
            target.push(raw);
        }
        Ok(map)
    }
}

#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub graph: InteractionGraph,
    pub id_map: IdMap,
    pub duplicates: usize,
}

/// Reads a `user<TAB>item` file. Blank lines and `#` comments are ignored.
/// Ids are re-indexed contiguously in ascending order of their original value.
pub fn load_edges(path: &Path) -> Result<LoadedDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut raw_pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        let parsed = match fields[..] {
            [u, i] => u.parse::<u64>().ok().zip(i.parse::<u64>().ok()),
            _ => None,
        };
        let Some(pair) = parsed else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected `user<TAB>item` integers, found {trimmed:?}"),
            });
        };
        raw_pairs.push(pair);
    }
    if raw_pairs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} contains no interactions",
            path.display()
        )));
    }

    let index_of = |ids: &mut dyn Iterator<Item = u64>| -> BTreeMap<u64, usize> {
        let mut m: BTreeMap<u64, usize> = ids.map(|id| (id, 0)).collect();
        for (k, v) in m.values_mut().enumerate() {
            *v = k;
        }
        m
    };
    let users = index_of(&mut raw_pairs.iter().map(|p| p.0));
    let items = index_of(&mut raw_pairs.iter().map(|p| p.1));
    let edges: Vec<Edge> = raw_pairs
        .iter()
        .map(|(u, i)| Edge::new(users[u], items[i]))
        .collect();
    let total = edges.len();
    let graph = InteractionGraph::new(users.len(), items.len(), edges)?;
    let duplicates = total - graph.n_edges();
    if duplicates > 0 {
        log::warn!("{}: dropped {duplicates} duplicate interactions", path.display());
    }
    Ok(LoadedDataset {
        graph,
        id_map: IdMap {
            users: users.into_keys().collect(),
            items: items.into_keys().collect(),
        },
        duplicates,
    })
}

/// Writes edges as `user<TAB>item` lines using the re-indexed ids.
pub fn write_edges(path: &Path, edges: &[Edge]) -> Result<()> {
    let mut buf = Vec::with_capacity(edges.len() * 10);
    for e in edges {
        writeln!(buf, "{}\t{}", e.user, e.item).expect("writing to a Vec cannot fail");
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`write_edges`] (no re-indexing).
pub fn read_edges(path: &Path) -> Result<Vec<Edge>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut it = trimmed.split('\t');
        let parsed = match (it.next(), it.next(), it.next()) {
            (Some(u), Some(i), None) => u.trim().parse().ok().zip(i.trim().parse().ok()),
            _ => None,
        };
        let (u, i) = parsed.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: format!("expected `user<TAB>item`, found {trimmed:?}"),
        })?;
        edges.push(Edge::new(u, i));
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_users_one_item() {
        let f = write_tmp("0\t0\n1\t0\n");
        let ds = load_edges(f.path()).unwrap();
        assert_eq!((ds.graph.n_users(), ds.graph.n_items(), ds.graph.n_edges()), (2, 1, 2));
    }

    #[test]
    fn duplicates_are_dropped_and_counted() {
        let f = write_tmp("# header\n5\t9\n5\t9\n\n7\t9\n");
        let ds = load_edges(f.path()).unwrap();
        assert_eq!(ds.graph.n_edges(), 2);
        assert_eq!(ds.duplicates, 1);
        assert_eq!(ds.id_map.users, vec![5, 7]);
        assert_eq!(ds.id_map.items, vec![9]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp("0\t1\n0 x\n");
        match load_edges(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp("# nothing\n\n");
        assert!(matches!(load_edges(f.path()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn id_map_and_edges_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let map = IdMap {
            users: vec![10, 20],
            items: vec![3],
        };
        map.write(&dir.path().join("ids.tsv")).unwrap();
        assert_eq!(IdMap::read(&dir.path().join("ids.tsv")).unwrap(), map);

        let edges = vec![Edge::new(0, 0), Edge::new(1, 0)];
        write_edges(&dir.path().join("e.tsv"), &edges).unwrap();
        assert_eq!(read_edges(&dir.path().join("e.tsv")).unwrap(), edges);
    }

    #[test]
    fn graph_rejects_out_of_range() {
        assert!(InteractionGraph::new(1, 1, [Edge::new(0, 1)]).is_err());
        let g = InteractionGraph::new(2, 3, [Edge::new(1, 2), Edge::new(0, 0)]).unwrap();
        assert!(g.contains(Edge::new(1, 2)));
        assert!(!g.contains(Edge::new(1, 1)));
        assert_eq!(g.item_node(2), 4);
    }
}
