use std::io::Write;

use super::BsdeSolution;
use crate::error::Result;

/// One CSV row per node; `Z` is empty on the terminal layer.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NodeRow {
    pub step: usize,
    pub state_index: usize,
    pub t: f64,
    pub w: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    #[serde(rename = "Z")]
    pub z: Option<f64>,
}

impl BsdeSolution {
    pub fn node_rows(&self) -> impl Iterator<Item = NodeRow> + '_ {
        self.y.iter().enumerate().flat_map(move |(i, layer)| {
            layer.iter().enumerate().map(move |(k, &y)| NodeRow {
                step: i,
                state_index: k,
                t: self.lattice.time(i),
                w: self.w(i, k),
                y,
                z: self.z.get(i).map(|zi| zi[k]),
            })
        })
    }
}

/// Writes `step,state_index,t,w,Y,Z` rows.
pub fn write_nodes_csv<W: Write>(sol: &BsdeSolution, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for row in sol.node_rows() {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::parse_generator;
    use crate::solver::{solve_backward, Lattice, SolverConfig};
    use crate::terminal::TerminalCondition;

    #[test]
    fn csv_layout() {
        let tc = TerminalCondition::parse("identity@T", 1.0).unwrap();
        let sol = solve_backward(&parse_generator("zero").unwrap(), &tc, Lattice::new(1.0, 4).unwrap(), &SolverConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_nodes_csv(&sol, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,state_index,t,w,Y,Z");
        assert_eq!(lines.len(), 1 + 15);
        assert_eq!(lines[1], "0,0,0.0,0.0,0.0,1.0");
        assert!(lines[15].starts_with("4,4,1.0,2.0,2.0,"));
        assert!(lines[15].ends_with(','));
    }
}
