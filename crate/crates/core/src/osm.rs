//! OSM XML ingestion and reduction to a topological road graph.
//!
//! Only `node` and `way` elements are read. A way is a road when it carries a
//! `highway` tag. Chains of degree-2 nodes are contracted into single edges;
//! a node tagged `junction=*` is kept as a mapped intersection even when it
//! has degree 2.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::warn;
use thiserror::Error;

use crate::graph::{haversine_distance, EdgeId, GeoPoint, GraphError, NodeId, RoadEdge, RoadGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OsmError {
    #[error("XML parse error at line {line}, column {col}: {message}")]
    Xml {
        line: u32,
        col: u32,
        message: String,
    },
    #[error("way {way} references missing node {node}")]
    DanglingReference { way: i64, node: NodeId },
    #[error("start node {0} is not part of the road network")]
    UnknownStart(NodeId),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawNode {
    pub id: NodeId,
    pub position: GeoPoint,
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawWay {
    pub id: i64,
    pub nodes: Vec<NodeId>,
    pub highway: String,
}

/// Highway-tagged ways and the nodes they reference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawOsm {
    pub nodes: BTreeMap<NodeId, RawNode>,
    pub ways: Vec<RawWay>,
}

#[derive(Debug, Clone, Default)]
pub struct OsmOptions {
    /// Accepted `highway` values; `None` accepts every value.
    pub highway_filter: Option<BTreeSet<String>>,
}

fn xml_error(doc: &roxmltree::Document, node: roxmltree::Node, message: String) -> OsmError {
    let pos = doc.text_pos_at(node.range().start);
    OsmError::Xml {
        line: pos.row,
        col: pos.col,
        message,
    }
}

fn attr<'a, T: std::str::FromStr>(
    doc: &roxmltree::Document,
    node: roxmltree::Node<'a, 'a>,
    name: &str,
) -> Result<T, OsmError> {
    let raw = node.attribute(name).ok_or_else(|| {
        xml_error(
            doc,
            node,
            format!("<{}> missing attribute '{name}'", node.tag_name().name()),
        )
    })?;
    raw.parse().map_err(|_| {
        xml_error(
            doc,
            node,
            format!("invalid value '{raw}' for attribute '{name}'"),
        )
    })
}

fn tags<'a>(node: roxmltree::Node<'a, 'a>) -> BTreeMap<String, String> {
    node.children()
        .filter(|c| c.has_tag_name("tag"))
        .filter_map(|t| Some((t.attribute("k")?.to_owned(), t.attribute("v")?.to_owned())))
        .collect()
}

pub fn parse_osm(document: &str, options: &OsmOptions) -> Result<RawOsm, OsmError> {
    let doc = roxmltree::Document::parse(document).map_err(|e| {
        let pos = e.pos();
        OsmError::Xml {
            line: pos.row,
            col: pos.col,
            message: e.to_string(),
        }
    })?;

    let mut all_nodes = HashMap::new();
    let mut ways = Vec::new();
    for el in doc.root_element().children().filter(|n| n.is_element()) {
        match el.tag_name().name() {
            "node" => {
                let id = NodeId(attr(&doc, el, "id")?);
                let lat: f64 = attr(&doc, el, "lat")?;
                let lon: f64 = attr(&doc, el, "lon")?;
                let position =
                    GeoPoint::new(lat, lon).map_err(|e| xml_error(&doc, el, e.to_string()))?;
                all_nodes.insert(
                    id,
                    RawNode {
                        id,
                        position,
                        tags: tags(el),
                    },
                );
            }
            "way" => {
                let way_tags = tags(el);
                let Some(highway) = way_tags.get("highway") else {
                    continue;
                };
                if let Some(filter) = &options.highway_filter {
                    if !filter.contains(highway) {
                        continue;
                    }
                }
                let id: i64 = attr(&doc, el, "id")?;
                let refs = el
                    .children()
                    .filter(|c| c.has_tag_name("nd"))
                    .map(|nd| attr::<i64>(&doc, nd, "ref").map(NodeId))
                    .collect::<Result<Vec<_>, _>>()?;
                ways.push(RawWay {
                    id,
                    nodes: refs,
                    highway: highway.clone(),
                });
            }
            _ => {}
        }
    }

    let mut nodes = BTreeMap::new();
    for way in &ways {
        for &r in &way.nodes {
            let node = all_nodes.get(&r).ok_or(OsmError::DanglingReference {
                way: way.id,
                node: r,
            })?;
            nodes.entry(r).or_insert_with(|| node.clone());
        }
    }
    Ok(RawOsm { nodes, ways })
}

struct Segment {
    a: NodeId,
    b: NodeId,
    length: f64,
}

/// Contracts degree-2 chains of the raw network into a [`RoadGraph`].
///
/// Edge length is the haversine length summed along the contracted chain.
/// A chain that would close on itself keeps its middle node so that the loop
/// survives as two parallel edges.
pub fn build_road_graph(raw: &RawOsm, start: NodeId) -> Result<RoadGraph, OsmError> {
    let mut segments = Vec::new();
    for way in &raw.ways {
        for pair in way.nodes.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a == b {
                warn!("dropping self-loop at node {a} in way {}", way.id);
                continue;
            }
            let length = haversine_distance(raw.nodes[&a].position, raw.nodes[&b].position);
            segments.push(Segment { a, b, length });
        }
    }

    let mut incident: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    for (s, seg) in segments.iter().enumerate() {
        incident.entry(seg.a).or_default().push(s);
        incident.entry(seg.b).or_default().push(s);
    }
    if !incident.contains_key(&start) {
        return Err(OsmError::UnknownStart(start));
    }
    for id in raw.nodes.keys().filter(|id| !incident.contains_key(id)) {
        warn!("dropping isolated node {id}");
    }

    let mut keep: BTreeSet<NodeId> = incident
        .iter()
        .filter(|(id, segs)| {
            segs.len() != 2 || **id == start || raw.nodes[*id].tags.contains_key("junction")
        })
        .map(|(id, _)| *id)
        .collect();

    // Components made only of degree-2 nodes are pure cycles; pin their smallest node.
    {
        let mut seen = BTreeSet::new();
        for &s in incident.keys() {
            if seen.contains(&s) {
                continue;
            }
            let mut stack = vec![s];
            let mut members = Vec::new();
            seen.insert(s);
            while let Some(u) = stack.pop() {
                members.push(u);
                for &k in &incident[&u] {
                    let v = if segments[k].a == u {
                        segments[k].b
                    } else {
                        segments[k].a
                    };
                    if seen.insert(v) {
                        stack.push(v);
                    }
                }
            }
            if members.iter().all(|m| !keep.contains(m)) {
                keep.insert(*members.iter().min().expect("non-empty component"));
            }
        }
    }

    let chains = loop {
        match contract(&segments, &incident, &keep) {
            Ok(chains) => break chains,
            Err(split_at) => {
                keep.insert(split_at);
            }
        }
    };

    let nodes = keep
        .iter()
        .map(|id| (*id, raw.nodes[id].position))
        .collect();
    let edges = chains
        .into_iter()
        .enumerate()
        .map(|(k, (a, b, length))| RoadEdge {
            id: EdgeId(k as u32),
            endpoints: (a, b),
            length,
        })
        .collect();
    Ok(RoadGraph::new(nodes, edges, start)?)
}

/// Walks every chain between kept nodes. Returns the node to pin when a
/// chain closes on its own origin.
fn contract(
    segments: &[Segment],
    incident: &BTreeMap<NodeId, Vec<usize>>,
    keep: &BTreeSet<NodeId>,
) -> Result<Vec<(NodeId, NodeId, f64)>, NodeId> {
    let mut used = vec![false; segments.len()];
    let mut chains = Vec::new();
    for &origin in keep {
        for &first in &incident[&origin] {
            if used[first] {
                continue;
            }
            let mut interior = Vec::new();
            let mut length = 0.0;
            let mut at = origin;
            let mut seg = first;
            loop {
                used[seg] = true;
                length += segments[seg].length;
                at = if segments[seg].a == at {
                    segments[seg].b
                } else {
                    segments[seg].a
                };
                if keep.contains(&at) {
                    break;
                }
                interior.push(at);
                seg = *incident[&at]
                    .iter()
                    .find(|&&s| !used[s])
                    .expect("degree-2 interior node has an unused segment");
            }
            if at == origin {
                return Err(interior[interior.len() / 2]);
            }
            chains.push((origin, at, length));
        }
    }
    Ok(chains)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(nodes: &[(i64, f64, f64, &str)], ways: &[(i64, &[i64], Option<&str>)]) -> String {
        let mut s = String::from("<?xml version=\"1.0\"?>\n<osm version=\"0.6\">\n");
        for (id, lat, lon, extra) in nodes {
            s += &format!("  <node id=\"{id}\" lat=\"{lat}\" lon=\"{lon}\">{extra}</node>\n");
        }
        for (id, refs, hw) in ways {
            s += &format!("  <way id=\"{id}\">\n");
            for r in *refs {
                s += &format!("    <nd ref=\"{r}\"/>\n");
            }
            if let Some(hw) = hw {
                s += &format!("    <tag k=\"highway\" v=\"{hw}\"/>\n");
            }
            s += "  </way>\n";
        }
        s + "</osm>\n"
    }

    #[test]
    fn no_highways_gives_empty_result() {
        let text = doc(
            &[(1, 0.0, 0.0, ""), (2, 0.0, 0.001, "")],
            &[(10, &[1, 2], None)],
        );
        let raw = parse_osm(&text, &OsmOptions::default()).unwrap();
        assert!(raw.ways.is_empty());
        assert!(raw.nodes.is_empty());
    }

    #[test]
    fn minimal_way() {
        let text = doc(
            &[(1, 0.0, 0.0, ""), (2, 0.0, 0.001, "")],
            &[(10, &[1, 2], Some("residential"))],
        );
        let raw = parse_osm(&text, &OsmOptions::default()).unwrap();
        assert_eq!(raw.nodes.len(), 2);
        assert_eq!(raw.ways.len(), 1);
    }

    #[test]
    fn malformed_xml_reports_line() {
        let text = "<osm>\n<node id=\"1\" lat=\"0\" lon=\"0\">\n</osm>";
        match parse_osm(text, &OsmOptions::default()) {
            Err(OsmError::Xml { line, .. }) => assert!(line >= 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_reference_names_node() {
        let text = doc(&[(1, 0.0, 0.0, "")], &[(10, &[1, 99], Some("primary"))]);
        assert_eq!(
            parse_osm(&text, &OsmOptions::default()).unwrap_err(),
            OsmError::DanglingReference {
                way: 10,
                node: NodeId(99)
            }
        );
    }

    #[test]
    fn highway_filter_excludes_classes() {
        let text = doc(
            &[(1, 0.0, 0.0, ""), (2, 0.0, 0.001, ""), (3, 0.0, 0.002, "")],
            &[
                (10, &[1, 2], Some("primary")),
                (11, &[2, 3], Some("footway")),
            ],
        );
        let opts = OsmOptions {
            highway_filter: Some(["primary".to_string()].into_iter().collect()),
        };
        let raw = parse_osm(&text, &opts).unwrap();
        assert_eq!(raw.ways.len(), 1);
        assert_eq!(raw.nodes.len(), 2);
    }

    #[test]
    fn contracts_degree_two_chain() {
        let text = doc(
            &[
                (1, 0.0, 0.0, ""),
                (2, 0.0, 0.001, ""),
                (3, 0.0005, 0.002, ""),
            ],
            &[(10, &[1, 2, 3], Some("residential"))],
        );
        let raw = parse_osm(&text, &OsmOptions::default()).unwrap();
        let g = build_road_graph(&raw, NodeId(1)).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        let p = |id: i64| raw.nodes[&NodeId(id)].position;
        let expected = haversine_distance(p(1), p(2)) + haversine_distance(p(2), p(3));
        assert!((g.edges()[0].length - expected).abs() < 1e-6);
    }

    #[test]
    fn triangle_is_not_contracted_when_tagged() {
        let j = "<tag k=\"junction\" v=\"yes\"/>";
        let text = doc(
            &[(1, 0.0, 0.0, j), (2, 0.0, 0.001, j), (3, 0.001, 0.0, j)],
            &[(10, &[1, 2, 3, 1], Some("residential"))],
        );
        let raw = parse_osm(&text, &OsmOptions::default()).unwrap();
        let g = build_road_graph(&raw, NodeId(1)).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (3, 3));
    }

    #[test]
    fn untagged_ring_keeps_a_split_node() {
        let text = doc(
            &[
                (1, 0.0, 0.0, ""),
                (2, 0.0, 0.001, ""),
                (3, 0.001, 0.001, ""),
                (4, 0.001, 0.0, ""),
            ],
            &[(10, &[1, 2, 3, 4, 1], Some("residential"))],
        );
        let raw = parse_osm(&text, &OsmOptions::default()).unwrap();
        let g = build_road_graph(&raw, NodeId(1)).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 2);
        let total: f64 = g.edges().iter().map(|e| e.length).sum();
        let p = |id: i64| raw.nodes[&NodeId(id)].position;
        let ring = haversine_distance(p(1), p(2))
            + haversine_distance(p(2), p(3))
            + haversine_distance(p(3), p(4))
            + haversine_distance(p(4), p(1));
        assert!((total - ring).abs() < 1e-6);
    }

    #[test]
    fn self_loop_segments_dropped() {
        let text = doc(
            &[(1, 0.0, 0.0, ""), (2, 0.0, 0.001, "")],
            &[(10, &[1, 1, 2], Some("residential"))],
        );
        let raw = parse_osm(&text, &OsmOptions::default()).unwrap();
        let g = build_road_graph(&raw, NodeId(1)).unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn disconnected_network_is_rejected() {
        let text = doc(
            &[
                (1, 0.0, 0.0, ""),
                (2, 0.0, 0.001, ""),
                (3, 0.01, 0.0, ""),
                (4, 0.01, 0.001, ""),
            ],
            &[
                (10, &[1, 2], Some("residential")),
                (11, &[3, 4], Some("residential")),
            ],
        );
        let raw = parse_osm(&text, &OsmOptions::default()).unwrap();
        assert_eq!(
            build_road_graph(&raw, NodeId(1)).unwrap_err(),
            OsmError::Graph(GraphError::Disconnected(vec![2, 2]))
        );
    }
}
