use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A branch between two buses with per-unit series impedance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

/// Unordered pair of bus ids naming a line, e.g. `1-2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LineId(pub usize, pub usize);

impl LineId {
    fn matches(&self, line: &Line) -> bool {
        (self.0 == line.from && self.1 == line.to) || (self.0 == line.to && self.1 == line.from)
    }
}

impl fmt::Display for LineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

impl std::str::FromStr for LineId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("line id `{s}` is not of the form <bus>-<bus>"));
        let (a, b) = s.trim().split_once('-').ok_or_else(bad)?;
        let a = a.trim().parse().map_err(|_| bad())?;
        let b = b.trim().parse().map_err(|_| bad())?;
        Ok(LineId(a, b))
    }
}

/// Radial single-phase feeder rooted at the substation (bus 0).
///
/// Buses are numbered `0..=N`. Every per-bus vector in this crate has length
/// `N` and stores bus `n` at index `n - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederTopology {
    lines: Vec<Line>,
    v0: f64,
    ratings: Vec<f64>,
    // parent[b] for b in 0..=N; parent[0] = 0
    parent: Vec<usize>,
    // index into `lines` of the branch connecting b to parent[b]
    parent_line: Vec<usize>,
    depth: Vec<usize>,
    // buses in breadth-first order from the root
    order: Vec<usize>,
}

impl FeederTopology {
    /// Validates and orients a feeder. `ratings[n - 1]` is the inverter
    /// apparent-power rating at bus `n` (0 means no inverter).
    pub fn new(lines: Vec<Line>, ratings: Vec<f64>, v0: f64) -> Result<Self> {
        let n = lines.len();
        if n == 0 {
            return Err(Error::Topology("feeder has no lines".into()));
        }
        if !(v0 > 0.0 && v0.is_finite()) {
            return Err(Error::Validation(format!("substation voltage must be positive, got {v0}")));
        }
        if ratings.len() != n {
            return Err(Error::Topology(format!(
                "{n} lines imply {n} non-substation buses but {} ratings were given",
                ratings.len()
            )));
        }
        for (i, &s) in ratings.iter().enumerate() {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Validation(format!("bus {}: rating must be >= 0, got {s}", i + 1)));
            }
        }
        let mut adjacency = vec![Vec::new(); n + 1];
        for (k, l) in lines.iter().enumerate() {
            if l.from > n || l.to > n {
                return Err(Error::Topology(format!(
                    "line {}-{} references a bus outside 0..={n}",
                    l.from, l.to
                )));
            }
            if l.from == l.to {
                return Err(Error::Topology(format!("line {}-{} is a self loop", l.from, l.to)));
            }
            if !(l.r > 0.0 && l.r.is_finite() && l.x > 0.0 && l.x.is_finite()) {
                return Err(Error::Validation(format!(
                    "line {}-{}: impedance must be positive, got r={} x={}",
                    l.from, l.to, l.r, l.x
                )));
            }
            adjacency[l.from].push((l.to, k));
            adjacency[l.to].push((l.from, k));
        }

        let mut parent = vec![usize::MAX; n + 1];
        let mut parent_line = vec![usize::MAX; n + 1];
        let mut depth = vec![0; n + 1];
        let mut order = Vec::with_capacity(n + 1);
        let mut queue = VecDeque::from([0usize]);
        parent[0] = 0;
        while let Some(b) = queue.pop_front() {
            order.push(b);
            for &(nb, k) in &adjacency[b] {
                if k == parent_line[b] {
                    continue;
                }
                if parent[nb] != usize::MAX {
                    return Err(Error::Topology(format!("cycle through line {}-{}", lines[k].from, lines[k].to)));
                }
                parent[nb] = b;
                parent_line[nb] = k;
                depth[nb] = depth[b] + 1;
                queue.push_back(nb);
            }
        }
        if order.len() != n + 1 {
            let missing = (0..=n).find(|&b| parent[b] == usize::MAX).unwrap_or(0);
            return Err(Error::Topology(format!("bus {missing} is not connected to the substation")));
        }

        Ok(Self {
            lines,
            v0,
            ratings,
            parent,
            parent_line,
            depth,
            order,
        })
    }

    /// Number of non-substation buses `N`.
    pub fn num_buses(&self) -> usize {
        self.lines.len()
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    /// Ratings indexed by `bus - 1`.
    pub fn ratings(&self) -> &[f64] {
        &self.ratings
    }

    pub fn rating(&self, bus: usize) -> f64 {
        self.ratings[bus - 1]
    }

    /// Buses (ids, ascending) hosting an inverter.
    pub fn inverter_buses(&self) -> Vec<usize> {
        (1..=self.num_buses()).filter(|&b| self.rating(b) > 0.0).collect()
    }

    pub fn parent(&self, bus: usize) -> usize {
        self.parent[bus]
    }

    pub fn depth(&self, bus: usize) -> usize {
        self.depth[bus]
    }

    /// The line connecting `bus` to its parent.
    pub fn parent_line(&self, bus: usize) -> &Line {
        &self.lines[self.parent_line[bus]]
    }

    /// Buses in breadth-first order, starting with the substation.
    pub fn bfs_order(&self) -> &[usize] {
        &self.order
    }

    /// Resolves a line id to the child bus of that line.
    pub fn line_child(&self, id: LineId) -> Result<usize> {
        self.lines
            .iter()
            .position(|l| id.matches(l))
            .map(|k| {
                let l = &self.lines[k];
                if self.parent[l.to] == l.from && self.parent_line[l.to] == k {
                    l.to
                } else {
                    l.from
                }
            })
            .ok_or(Error::UnknownLine(id.0, id.1))
    }

    /// Lowest common ancestor of two buses.
    pub fn common_ancestor(&self, mut a: usize, mut b: usize) -> usize {
        while self.depth[a] > self.depth[b] {
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b];
        }
        while a != b {
            a = self.parent[a];
            b = self.parent[b];
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(from: usize, to: usize) -> Line {
        Line { from, to, r: 0.1, x: 0.1 }
    }

    #[test]
    fn accepts_reversed_orientation() {
        let t = FeederTopology::new(vec![line(1, 0), line(2, 1)], vec![0.0, 1.0], 1.0).unwrap();
        assert_eq!(t.parent(2), 1);
        assert_eq!(t.parent(1), 0);
        assert_eq!(t.inverter_buses(), vec![2]);
        assert_eq!(t.line_child(LineId(2, 1)).unwrap(), 2);
    }

    #[test]
    fn rejects_cycles_and_disconnected_buses() {
        // 0-1, 1-2, 2-1 duplicates an edge, leaving bus 3 unreachable
        let err = FeederTopology::new(vec![line(0, 1), line(1, 2), line(2, 1)], vec![0.0; 3], 1.0);
        assert!(matches!(err, Err(Error::Topology(_))));
        let err = FeederTopology::new(vec![line(0, 1), line(2, 3), line(3, 2)], vec![0.0; 3], 1.0);
        assert!(matches!(err, Err(Error::Topology(_))));
    }

    #[test]
    fn rejects_nonpositive_impedance() {
        let bad = Line { from: 0, to: 1, r: 0.0, x: 0.1 };
        assert!(matches!(FeederTopology::new(vec![bad], vec![0.0], 1.0), Err(Error::Validation(_))));
    }

    #[test]
    fn line_id_parsing() {
        assert_eq!("1-5".parse::<LineId>().unwrap(), LineId(1, 5));
        assert!("15".parse::<LineId>().is_err());
    }
}
