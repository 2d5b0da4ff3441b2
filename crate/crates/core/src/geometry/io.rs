use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{NodeSet, Rect, Role};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct NodeRow {
    x: f64,
    y: f64,
    role: String,
    segment: i32,
}

/// Writes `x,y,role,segment` rows; `segment` is `-1` for interior nodes.
pub fn write_nodes_csv<W: Write>(nodes: &NodeSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (p, role) in nodes.points().iter().zip(nodes.roles()) {
        w.serialize(NodeRow {
            x: p[0],
            y: p[1],
            role: if role.is_boundary() { "boundary" } else { "interior" }.to_string(),
            segment: role.segment(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a node set written by [`write_nodes_csv`]; the domain is not part of
/// the file and has to be supplied.
pub fn read_nodes_csv<R: Read>(reader: R, domain: Rect) -> Result<NodeSet> {
    let mut r = csv::Reader::from_reader(reader);
    let mut points = Vec::new();
    let mut roles = Vec::new();
    for (line, row) in r.deserialize::<NodeRow>().enumerate() {
        let row = row?;
        let role = match (row.role.as_str(), row.segment) {
            ("interior", -1) => Role::Interior,
            ("boundary", s @ 0..=3) => Role::Boundary(s as u8),
            (role, seg) => {
                return Err(Error::InvalidInput(format!(
                    "row {}: bad role/segment pair ({role}, {seg})",
                    line + 1
                )))
            }
        };
        points.push([row.x, row.y]);
        roles.push(role);
    }
    NodeSet::new(points, roles, domain)
}
