#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use nalgebra::DMatrix;
use osm_alc::eog::SquareMatrix;
use osm_alc::graph::{GeoPoint, RoadEdge};
use osm_alc::{EdgeId, NodeId, RoadGraph, Route};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SAMPLE_EDGES: [(i64, i64); 15] = [
    (1, 2),
    (2, 3),
    (3, 4),
    (4, 5),
    (5, 2),
    (4, 6),
    (6, 7),
    (7, 8),
    (8, 11),
    (8, 9),
    (9, 10),
    (10, 11),
    (11, 12),
    (12, 6),
    (12, 1),
];

pub const SAMPLE_R1: [i64; 12] = [1, 2, 3, 4, 5, 2, 3, 4, 6, 7, 8, 11];

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn load_fixture(name: &str) -> RoadGraph {
    RoadGraph::from_json(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

pub fn ids(v: &[i64]) -> Vec<NodeId> {
    v.iter().map(|&i| NodeId(i)).collect()
}

/// Edge ids follow list order; nodes sit on a small lattice.
pub fn graph_from_triples(triples: &[(i64, i64, f64)], start: i64) -> RoadGraph {
    let nodes: BTreeSet<i64> = triples.iter().flat_map(|&(a, b, _)| [a, b]).collect();
    let nodes = nodes
        .into_iter()
        .map(|id| {
            let p = GeoPoint::new(0.001 * (id % 7) as f64, 0.001 * (id / 7) as f64).unwrap();
            (NodeId(id), p)
        })
        .collect();
    let edges = triples
        .iter()
        .enumerate()
        .map(|(k, &(a, b, length))| RoadEdge {
            id: EdgeId(k as u32),
            endpoints: (NodeId(a), NodeId(b)),
            length,
        })
        .collect();
    RoadGraph::new(nodes, edges, NodeId(start)).unwrap()
}

pub fn route(g: &RoadGraph, nodes: &[i64]) -> Route {
    Route::from_nodes(g, ids(nodes)).unwrap()
}

/// Connected graph on nodes `1..=n`: a random spanning tree plus up to
/// `extra` additional edges. Parallel edges only when `multi`.
pub fn random_graph(seed: u64, n: usize, extra: usize, multi: bool, unit: bool) -> RoadGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(i64, i64)> = Vec::new();
    for i in 2..=n as i64 {
        pairs.push((rng.gen_range(1..i), i));
    }
    for _ in 0..extra {
        let a = rng.gen_range(1..=n as i64);
        let b = rng.gen_range(1..=n as i64);
        let key = (a.min(b), a.max(b));
        if a == b || (!multi && pairs.iter().any(|&(x, y)| (x.min(y), x.max(y)) == key)) {
            continue;
        }
        pairs.push((a, b));
    }
    let triples: Vec<_> = pairs
        .into_iter()
        .map(|(a, b)| {
            let len = if unit {
                1.0
            } else {
                rng.gen_range(1..=40) as f64 * 5.0
            };
            (a, b, len)
        })
        .collect();
    graph_from_triples(&triples, 1)
}

/// Random walk of `hops` steps from node 1.
pub fn random_walk(g: &RoadGraph, seed: u64, hops: usize) -> Route {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![g.start_node()];
    let mut edges = Vec::new();
    for _ in 0..hops {
        let cur = *nodes.last().unwrap();
        let inc: Vec<_> = g.incident(cur).collect();
        let (e, next) = inc[rng.gen_range(0..inc.len())];
        edges.push(e.id);
        nodes.push(next);
    }
    Route::from_parts(g, nodes, edges).unwrap()
}

/// Number of spanning trees by enumerating every (n-1)-edge subset.
pub fn brute_force_spanning_trees(g: &RoadGraph) -> u64 {
    let n = g.node_count();
    let idx: HashMap<NodeId, usize> = g
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, v)| (v.id, i))
        .collect();
    let edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .map(|e| (idx[&e.endpoints.0], idx[&e.endpoints.1]))
        .collect();
    let mut count = 0;
    let mut chosen = Vec::new();
    fn find(p: &mut [usize], x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }
    fn rec(
        edges: &[(usize, usize)],
        start: usize,
        need: usize,
        n: usize,
        chosen: &mut Vec<usize>,
        count: &mut u64,
    ) {
        if need == 0 {
            let mut p: Vec<usize> = (0..n).collect();
            for &k in chosen.iter() {
                let (a, b) = edges[k];
                let (ra, rb) = (find(&mut p, a), find(&mut p, b));
                if ra == rb {
                    return;
                }
                p[ra] = rb;
            }
            *count += 1;
            return;
        }
        for k in start..edges.len() {
            chosen.push(k);
            rec(edges, k + 1, need - 1, n, chosen, count);
            chosen.pop();
        }
    }
    rec(&edges, 0, n - 1, n, &mut chosen, &mut count);
    count
}

pub fn to_nalgebra(m: &SquareMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.dim(), m.dim(), m.as_slice())
}

/// exp(mean log λ) from a symmetric eigendecomposition.
pub fn eigen_d_opt(m: &SquareMatrix) -> f64 {
    let eig = to_nalgebra(m).symmetric_eigen();
    let mean = eig.eigenvalues.iter().map(|l| l.ln()).sum::<f64>() / m.dim() as f64;
    mean.exp()
}

pub fn random_spd(seed: u64, dim: usize) -> SquareMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    let m = a.transpose() * &a + DMatrix::identity(dim, dim) * 0.05;
    let rows: Vec<Vec<f64>> = (0..dim)
        .map(|i| (0..dim).map(|j| m[(i, j)]).collect())
        .collect();
    SquareMatrix::from_rows(&rows).unwrap()
}

/// Literal transcription of the two-pass edge-count procedure, keyed by
/// unordered node pair. Valid for graphs without parallel edges.
pub fn count_oracle(route: &[NodeId]) -> BTreeMap<(i64, i64), u32> {
    let key = |u: NodeId, v: NodeId| (u.0.min(v.0), u.0.max(v.0));
    let mut c: BTreeMap<(i64, i64), u32> = BTreeMap::new();
    for i in 0..route.len().saturating_sub(1) {
        *c.entry(key(route[i], route[i + 1])).or_default() += 1;
    }
    let mut visited = BTreeSet::new();
    for i in 0..route.len() {
        let n = route[i];
        if visited.contains(&n) {
            for j in (0..i).rev() {
                if route[j] == n {
                    for k in j..i {
                        *c.entry(key(route[k], route[k + 1])).or_default() += 1;
                    }
                    break;
                }
            }
        } else {
            visited.insert(n);
        }
    }
    c
}

/// All-pairs shortest path lengths by Floyd–Warshall.
pub fn floyd(g: &RoadGraph) -> BTreeMap<(NodeId, NodeId), f64> {
    let ids: Vec<NodeId> = g.nodes().iter().map(|v| v.id).collect();
    let n = ids.len();
    let pos: HashMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in g.edges() {
        let (a, b) = (pos[&e.endpoints.0], pos[&e.endpoints.1]);
        d[a][b] = d[a][b].min(e.length);
        d[b][a] = d[b][a].min(e.length);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            out.insert((ids[i], ids[j]), d[i][j]);
        }
    }
    out
}

/// Minimum total distance over every perfect pairing of `nodes`.
pub fn brute_force_pairing(nodes: &[NodeId], dist: &BTreeMap<(NodeId, NodeId), f64>) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let first = nodes[0];
    let mut best = f64::INFINITY;
    for k in 1..nodes.len() {
        let rest: Vec<NodeId> = nodes[1..]
            .iter()
            .enumerate()
            .filter(|&(i, _)| i + 1 != k)
            .map(|(_, &v)| v)
            .collect();
        best = best.min(dist[&(first, nodes[k])] + brute_force_pairing(&rest, dist));
    }
    best
}

pub fn covers_all_edges(g: &RoadGraph, r: &Route) -> bool {
    let seen: BTreeSet<EdgeId> = r.edges().iter().copied().collect();
    g.edges().iter().all(|e| seen.contains(&e.id))
}
