//! Gmsh MSH 2.2 ASCII subset: `$Nodes` and `$Elements` with physical tags.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Mesh, TagMap};
use crate::error::{Error, Result};

fn element_dim_and_nodes(ty: u32) -> Option<(usize, usize)> {
    match ty {
        15 => Some((0, 1)),
        1 => Some((1, 2)),
        2 => Some((2, 3)),
        4 => Some((3, 4)),
        _ => None,
    }
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<&'a str> {
        for (i, l) in self.it.by_ref() {
            let t = l.trim();
            if !t.is_empty() {
                self.line = i + 1;
                return Some(t);
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<&'a str> {
        let line = self.line;
        self.next().ok_or_else(|| Error::Parse {
            line: line + 1,
            message: format!("unexpected end of file, expected {what}"),
        })
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(lines: &Lines, tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| lines.err(format!("missing {what}")))?;
    tok.parse().map_err(|_| lines.err(format!("invalid {what} `{tok}`")))
}

/// coordinates and the map from file node id to index
type NodeBlock = (Vec<[f64; 3]>, HashMap<u64, usize>);

pub fn parse_msh_str(text: &str, tag_map: &TagMap) -> Result<Mesh> {
    let mut lines = Lines {
        it: text.lines().enumerate(),
        line: 0,
    };
    let mut nodes: Option<NodeBlock> = None;
    // (element dimension, physical tag, node ids)
    let mut elements: Vec<(usize, i64, Vec<u64>, usize)> = Vec::new();
    let mut saw_format = false;

    while let Some(l) = lines.next() {
        match l {
            "$MeshFormat" => {
                let hdr = lines.expect("format header")?;
                let mut it = hdr.split_whitespace();
                let version: f64 = parse_num(&lines, it.next(), "format version")?;
                let file_type: i32 = parse_num(&lines, it.next(), "file type")?;
                if !(2.0..3.0).contains(&version) {
                    return Err(lines.err(format!("unsupported MSH version {version}, expected 2.2")));
                }
                if file_type != 0 {
                    return Err(lines.err("binary MSH files are not supported"));
                }
                if lines.expect("$EndMeshFormat")? != "$EndMeshFormat" {
                    return Err(lines.err("expected $EndMeshFormat"));
                }
                saw_format = true;
            }
            "$Nodes" => {
                let tok = lines.expect("node count")?;
                let n: usize = parse_num(&lines, Some(tok), "node count")?;
                let mut pts = Vec::with_capacity(n);
                let mut ids = HashMap::with_capacity(n);
                for _ in 0..n {
                    let l = lines.expect("node line")?;
                    let mut it = l.split_whitespace();
                    let id: u64 = parse_num(&lines, it.next(), "node id")?;
                    let mut x = [0.0; 3];
                    for (k, xk) in x.iter_mut().enumerate() {
                        *xk = parse_num(&lines, it.next(), &format!("coordinate {k}"))?;
                    }
                    if ids.insert(id, pts.len()).is_some() {
                        return Err(lines.err(format!("duplicate node id {id}")));
                    }
                    pts.push(x);
                }
                if lines.expect("$EndNodes")? != "$EndNodes" {
                    return Err(lines.err("expected $EndNodes"));
                }
                nodes = Some((pts, ids));
            }
            "$Elements" => {
                let tok = lines.expect("element count")?;
                let n: usize = parse_num(&lines, Some(tok), "element count")?;
                for _ in 0..n {
                    let l = lines.expect("element line")?;
                    let mut it = l.split_whitespace();
                    let _id: u64 = parse_num(&lines, it.next(), "element id")?;
                    let ty: u32 = parse_num(&lines, it.next(), "element type")?;
                    let ntags: usize = parse_num(&lines, it.next(), "tag count")?;
                    let mut tags = Vec::with_capacity(ntags);
                    for _ in 0..ntags {
                        tags.push(parse_num::<i64>(&lines, it.next(), "element tag")?);
                    }
                    let (edim, nn) = element_dim_and_nodes(ty)
                        .ok_or_else(|| lines.err(format!("unsupported element type {ty}")))?;
                    let mut ids = Vec::with_capacity(nn);
                    for _ in 0..nn {
                        ids.push(parse_num::<u64>(&lines, it.next(), "element node")?);
                    }
                    let phys = tags.first().copied().unwrap_or(0);
                    elements.push((edim, phys, ids, lines.line));
                }
                if lines.expect("$EndElements")? != "$EndElements" {
                    return Err(lines.err("expected $EndElements"));
                }
            }
            s if s.starts_with('$') => {
                // skip unknown sections such as $PhysicalNames
                let end = format!("$End{}", &s[1..]);
                loop {
                    if lines.expect(&end)? == end {
                        break;
                    }
                }
            }
            other => return Err(lines.err(format!("unexpected content `{other}`"))),
        }
    }
    if !saw_format {
        return Err(Error::Parse {
            line: 1,
            message: "missing $MeshFormat section".into(),
        });
    }
    let (points, ids) = nodes.ok_or_else(|| Error::Parse {
        line: lines.line,
        message: "missing $Nodes section".into(),
    })?;
    let dim = elements.iter().map(|e| e.0).max().unwrap_or(0);
    if dim < 2 {
        return Err(Error::Mesh("no triangles or tetrahedra in file".into()));
    }
    let mut cells = Vec::new();
    let mut facets = Vec::new();
    for (edim, phys, nids, line) in elements {
        let mut vs = Vec::with_capacity(nids.len());
        for id in nids {
            vs.push(*ids.get(&id).ok_or(Error::Parse {
                line,
                message: format!("element references unknown node {id}"),
            })?);
        }
        if edim == dim {
            cells.extend(vs);
        } else if edim + 1 == dim {
            if phys == 0 {
                return Err(Error::Mesh(format!("boundary facet {vs:?} (line {line}) has no physical tag")));
            }
            facets.push((vs, phys));
        }
    }
    Mesh::new(dim, points, cells, facets, tag_map.clone())
}

pub fn parse_mesh(path: impl AsRef<Path>, tag_map: &TagMap) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_msh_str(&text, tag_map)
}

pub fn write_msh_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
    let _ = writeln!(s, "$Nodes\n{}", mesh.n_vertices());
    for (i, p) in mesh.points().iter().enumerate() {
        let _ = writeln!(s, "{} {:?} {:?} {:?}", i + 1, p[0], p[1], p[2]);
    }
    s.push_str("$EndNodes\n");
    let (fty, cty) = if mesh.dim() == 2 { (1, 2) } else { (2, 4) };
    let _ = writeln!(s, "$Elements\n{}", mesh.n_facets() + mesh.n_cells());
    let mut id = 1;
    for f in 0..mesh.n_facets() {
        let t = mesh.facet_tag(f);
        let _ = write!(s, "{id} {fty} 2 {t} {t}");
        for v in mesh.facet(f) {
            let _ = write!(s, " {}", v + 1);
        }
        s.push('\n');
        id += 1;
    }
    for c in 0..mesh.n_cells() {
        let _ = write!(s, "{id} {cty} 2 0 1");
        for v in mesh.cell(c) {
            let _ = write!(s, " {}", v + 1);
        }
        s.push('\n');
        id += 1;
    }
    s.push_str("$EndElements\n");
    s
}

pub fn write_msh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_msh_string(mesh)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: &str = "$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
3
1 1 \"inlet\"
1 2 \"wall\"
1 3 \"outlet\"
$EndPhysicalNames
$Nodes
4
10 0 0 0
20 1 0 0
30 1 1 0
40 0 1 0
$EndNodes
$Elements
6
1 1 2 2 1 10 20
2 1 2 3 2 20 30
3 1 2 2 3 30 40
4 1 2 1 4 40 10
5 2 2 0 1 10 20 30
6 2 2 0 1 10 30 40
$EndElements
";

    fn tags() -> TagMap {
        TagMap::new(1, vec![2], vec![3])
    }

    #[test]
    fn parses_two_triangle_square() {
        let m = parse_msh_str(SQUARE, &tags()).unwrap();
        assert_eq!((m.dim(), m.n_vertices(), m.n_cells(), m.n_facets()), (2, 4, 2, 4));
        assert!((m.patch_geometry(3).unwrap().area - 1.0).abs() < 1e-15);
    }

    #[test]
    fn missing_facet_tag_is_an_error_listing_the_facet() {
        let bad = SQUARE.replace("6\n1 1 2 2 1 10 20\n", "5\n");
        let err = parse_msh_str(&bad, &tags()).unwrap_err();
        assert!(err.to_string().contains("[0, 1]"), "{err}");
        let zero = SQUARE.replace("1 1 2 2 1 10 20", "1 1 2 0 1 10 20");
        assert!(parse_msh_str(&zero, &tags()).unwrap_err().to_string().contains("no physical tag"));
    }

    #[test]
    fn bad_number_reports_line() {
        let bad = SQUARE.replace("20 1 0 0", "20 1 zero 0");
        match parse_msh_str(&bad, &tags()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 13),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn write_then_parse_round_trip() {
        let m = crate::mesh::generate::channel(3.0, 1.0, 6, 2).unwrap();
        let back = parse_msh_str(&write_msh_string(&m), m.tag_map()).unwrap();
        assert_eq!(back.points(), m.points());
        assert_eq!(back.n_cells(), m.n_cells());
        for f in 0..m.n_facets() {
            assert_eq!(back.facet(f), m.facet(f));
            assert_eq!(back.facet_tag(f), m.facet_tag(f));
        }
    }
}
