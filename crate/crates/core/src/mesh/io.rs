//! Text snapshot format for partitions together with their refinement forest.
//!
//! ```text
//! apxmesh 1
//! domain <name>
//! vertex <id> <x> <y>
//! tri <id> <v0> <v1> <v2> <gen> <parent|-> <refedge 0|1|2> <active 0|1>
//! ```

use super::forest::{ElementRecord, Forest, Rule};
use super::partition::Partition;
use crate::error::{ApxError, Result};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

/// Serializes the whole forest and the active flags of `p`.
pub fn to_text(p: &Partition) -> String {
    let d = p.forest().read();
    let mut s = String::new();
    s.push_str("apxmesh 1\n");
    let _ = writeln!(s, "domain {}", p.forest().domain.name);
    for (i, v) in d.vertices.iter().enumerate() {
        let _ = writeln!(s, "vertex {i} {:.17e} {:.17e}", v[0], v[1]);
    }
    for (i, e) in d.elements.iter().enumerate() {
        let parent = e.parent.map_or("-".to_string(), |x| x.to_string());
        let active = u8::from(p.contains(i as u32));
        let _ = writeln!(
            s,
            "tri {i} {} {} {} {} {parent} 0 {active}",
            e.vertices[0], e.vertices[1], e.vertices[2], e.generation
        );
    }
    s
}

pub fn mesh_io(p: &Partition, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_text(p))?;
    Ok(())
}

pub fn mesh_load(path: impl AsRef<Path>) -> Result<Partition> {
    from_text(&std::fs::read_to_string(path)?, None)
}

fn bad(line: usize, msg: impl Into<String>) -> ApxError {
    ApxError::MalformedMesh {
        line,
        msg: msg.into(),
    }
}

/// Parses a snapshot. The rule is inferred from the number of children per
/// refined element unless given; unrefined forests default to NVB.
pub fn from_text(text: &str, rule: Option<Rule>) -> Result<Partition> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (_, first) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    match first.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["apxmesh", "1"] => {}
        ["apxmesh", v] => return Err(ApxError::MeshVersion(v.to_string())),
        _ => return Err(bad(1, "missing `apxmesh` header")),
    }
    let (ln, dom) = lines.next().ok_or_else(|| bad(2, "missing domain line"))?;
    let name = dom
        .strip_prefix("domain ")
        .map(str::trim)
        .filter(|n| !n.is_empty())
        .ok_or_else(|| bad(ln, "expected `domain <name>`"))?
        .to_string();
    let mut vertices = Vec::new();
    let mut elements: Vec<ElementRecord> = Vec::new();
    let mut active = Vec::new();
    for (ln, l) in lines {
        let tok: Vec<&str> = l.split_whitespace().collect();
        let num = |s: &str| s.parse::<u32>().map_err(|_| bad(ln, format!("bad integer `{s}`")));
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad(ln, format!("bad real `{s}`")));
        match tok.as_slice() {
            ["vertex", id, x, y] => {
                if num(id)? as usize != vertices.len() {
                    return Err(bad(ln, "vertex ids must be dense and ordered"));
                }
                let p = [real(x)?, real(y)?];
                if !p[0].is_finite() || !p[1].is_finite() {
                    return Err(bad(ln, "non-finite coordinate"));
                }
                vertices.push(p);
            }
            ["tri", id, v0, v1, v2, g, parent, re, act] => {
                if num(id)? as usize != elements.len() {
                    return Err(bad(ln, "element ids must be dense and ordered"));
                }
                let mut v = [num(v0)?, num(v1)?, num(v2)?];
                if v.iter().any(|&x| x as usize >= vertices.len()) {
                    return Err(bad(ln, "unknown vertex id"));
                }
                let k = num(re)? as usize;
                if k > 2 {
                    return Err(bad(ln, "refedge must be 0, 1 or 2"));
                }
                v = [v[k], v[(k + 1) % 3], v[(k + 2) % 3]];
                let parent = if *parent == "-" { None } else { Some(num(parent)?) };
                if let Some(pp) = parent {
                    if pp as usize >= elements.len() {
                        return Err(bad(ln, "parent must precede child"));
                    }
                }
                let root = parent.map_or(elements.len() as u32, |pp| elements[pp as usize].root);
                elements.push(ElementRecord {
                    vertices: v,
                    generation: num(g)?,
                    parent,
                    first_child: None,
                    root,
                });
                match *act {
                    "1" => active.push(elements.len() as u32 - 1),
                    "0" => {}
                    _ => return Err(bad(ln, "active flag must be 0 or 1")),
                }
            }
            _ => return Err(bad(ln, format!("unrecognized line `{l}`"))),
        }
    }
    let mut nkids = vec![0usize; elements.len()];
    for i in 0..elements.len() {
        if let Some(pp) = elements[i].parent {
            nkids[pp as usize] += 1;
            if elements[pp as usize].first_child.is_none() {
                elements[pp as usize].first_child = Some(i as u32);
            }
        }
    }
    let inferred = nkids.iter().copied().find(|&n| n > 0).map(|n| if n == 4 { Rule::Red } else { Rule::Nvb });
    let rule = rule.or(inferred).unwrap_or(Rule::Nvb);
    if nkids.iter().any(|&n| n != 0 && n != rule.children()) {
        return Err(bad(0, "inconsistent child counts"));
    }
    let forest = Arc::new(Forest::from_records(&name, vertices, elements, rule));
    Ok(Partition::from_active(forest, active))
}

/// Equality of active sets, forest records and coordinates across forests.
pub fn structurally_equal(a: &Partition, b: &Partition) -> bool {
    if a.active() != b.active() || a.rule() != b.rule() {
        return false;
    }
    let (da, db) = (a.forest().read(), b.forest().read());
    da.vertices == db.vertices
        && da.elements.len() == db.elements.len()
        && da.elements.iter().zip(&db.elements).all(|(x, y)| {
            x.vertices == y.vertices && x.generation == y.generation && x.parent == y.parent
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::domain::{l_shape, unit_square};

    #[test]
    fn round_trip_initial() {
        let p = Partition::initial(unit_square(Rule::Nvb));
        let q = from_text(&to_text(&p), None).unwrap();
        assert!(structurally_equal(&p, &q));
    }

    #[test]
    fn round_trip_adaptive_red() {
        let mut p = Partition::initial(l_shape(Rule::Red));
        for _ in 0..3 {
            let first = p.active()[0];
            p = p.refine(&[first]).unwrap();
        }
        let q = from_text(&to_text(&p), None).unwrap();
        assert!(structurally_equal(&p, &q));
        assert_eq!(q.rule(), Rule::Red);
        // Loaded forest keeps refining consistently.
        let a = p.uniform_refine();
        let b = q.uniform_refine();
        assert!(structurally_equal(&a, &b));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(from_text("apxmesh 2\n", None), Err(ApxError::MeshVersion(_))));
        assert!(from_text("apxmesh 1\ndomain x\nvertex 0 a 0\n", None).is_err());
        assert!(from_text("hello", None).is_err());
    }

    #[test]
    fn rotated_refinement_edge_is_normalized() {
        let text = "apxmesh 1\ndomain t\nvertex 0 0 0\nvertex 1 1 0\nvertex 2 0 1\ntri 0 1 2 0 0 - 2 1\n";
        let p = from_text(text, None).unwrap();
        assert_eq!(p.forest().read().element(0).vertices, [0, 1, 2]);
    }
}
