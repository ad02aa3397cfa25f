//! Finite atomic lattices of scalar type names and semantic tags.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Elem = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("invalid lattice document: {0}")]
    Json(String),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("duplicate element `{0}`")]
    Duplicate(String),
    #[error("order has a cycle through `{0}`")]
    Cycle(String),
    #[error("`{0}` is not the top element")]
    NotTop(String),
    #[error("`{0}` is not the bottom element")]
    NotBottom(String),
    #[error("`{a}` and `{b}` have no unique {op}")]
    NotALattice {
        a: String,
        b: String,
        op: &'static str,
    },
}

/// On-disk form: `edges` lists `[child, parent]` pairs of the Hasse diagram.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct LatticeDoc {
    pub elements: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub top: String,
    pub bottom: String,
    /// Elements that are semantic tags rather than C scalar types.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    names: Vec<String>,
    index: HashMap<String, Elem>,
    leq: Vec<Vec<bool>>,
    join: Vec<Vec<Elem>>,
    meet: Vec<Vec<Elem>>,
    top: Elem,
    bottom: Elem,
    tags: BTreeSet<Elem>,
    doc: LatticeDoc,
}

impl Lattice {
    pub fn from_json(text: &str) -> Result<Lattice, LatticeError> {
        let doc: LatticeDoc =
            serde_json::from_str(text).map_err(|e| LatticeError::Json(e.to_string()))?;
        Lattice::new(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("lattice serializes")
    }

    pub fn doc(&self) -> &LatticeDoc {
        &self.doc
    }

    pub fn new(doc: LatticeDoc) -> Result<Lattice, LatticeError> {
        let mut index = HashMap::new();
        for (i, e) in doc.elements.iter().enumerate() {
            if index.insert(e.clone(), i).is_some() {
                return Err(LatticeError::Duplicate(e.clone()));
            }
        }
        let get = |n: &str| {
            index
                .get(n)
                .copied()
                .ok_or_else(|| LatticeError::UnknownElement(n.to_string()))
        };
        let n = doc.elements.len();
        let mut leq = vec![vec![false; n]; n];
        for (i, row) in leq.iter_mut().enumerate() {
            row[i] = true;
        }
        for (c, p) in &doc.edges {
            let (c, p) = (get(c)?, get(p)?);
            leq[c][p] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if leq[i][k] {
                    for j in 0..n {
                        if leq[k][j] {
                            leq[i][j] = true;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && leq[i][j] && leq[j][i] {
                    return Err(LatticeError::Cycle(doc.elements[i].clone()));
                }
            }
        }
        let top = get(&doc.top)?;
        let bottom = get(&doc.bottom)?;
        if (0..n).any(|i| !leq[i][top]) {
            return Err(LatticeError::NotTop(doc.top.clone()));
        }
        if (0..n).any(|i| !leq[bottom][i]) {
            return Err(LatticeError::NotBottom(doc.bottom.clone()));
        }
        let bound = |a: Elem, b: Elem, upper: bool| -> Option<Elem> {
            let cands: Vec<Elem> = (0..n)
                .filter(|&c| {
                    if upper {
                        leq[a][c] && leq[b][c]
                    } else {
                        leq[c][a] && leq[c][b]
                    }
                })
                .collect();
            cands.iter().copied().find(|&c| {
                cands
                    .iter()
                    .all(|&d| if upper { leq[c][d] } else { leq[d][c] })
            })
        };
        let mut join = vec![vec![0; n]; n];
        let mut meet = vec![vec![0; n]; n];
        for a in 0..n {
            for b in 0..n {
                let err = |op| LatticeError::NotALattice {
                    a: doc.elements[a].clone(),
                    b: doc.elements[b].clone(),
                    op,
                };
                join[a][b] = bound(a, b, true).ok_or_else(|| err("join"))?;
                meet[a][b] = bound(a, b, false).ok_or_else(|| err("meet"))?;
            }
        }
        let tags = doc.tags.iter().map(|t| get(t)).collect::<Result<_, _>>()?;
        Ok(Lattice {
            names: doc.elements.clone(),
            index,
            leq,
            join,
            meet,
            top,
            bottom,
            tags,
            doc,
        })
    }

    /// The lattice used when none is supplied: signed and unsigned integers
    /// by width, a code pointer, and the usual extremes.
    pub fn default_lattice() -> Lattice {
        Self::default_with_tags(&[])
    }

    /// The default lattice plus semantic tags; each tag is placed under
    /// its parent (`int` when unspecified).
    pub fn default_with_tags(tags: &[(&str, &str)]) -> Lattice {
        let mut doc = default_doc();
        for (t, parent) in tags {
            doc.elements.push(t.to_string());
            doc.edges.push((t.to_string(), parent.to_string()));
            doc.edges.push((doc.bottom.clone(), t.to_string()));
            doc.tags.push(t.to_string());
        }
        Lattice::new(doc).expect("default lattice is well formed")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn elements(&self) -> impl Iterator<Item = Elem> {
        0..self.names.len()
    }

    pub fn get(&self, name: &str) -> Option<Elem> {
        self.index.get(name.trim_start_matches('#')).copied()
    }

    pub fn name(&self, e: Elem) -> &str {
        &self.names[e]
    }

    pub fn top(&self) -> Elem {
        self.top
    }

    pub fn bottom(&self) -> Elem {
        self.bottom
    }

    pub fn leq(&self, a: Elem, b: Elem) -> bool {
        self.leq[a][b]
    }

    pub fn join(&self, a: Elem, b: Elem) -> Elem {
        self.join[a][b]
    }

    pub fn meet(&self, a: Elem, b: Elem) -> Elem {
        self.meet[a][b]
    }

    pub fn is_tag(&self, e: Elem) -> bool {
        self.tags.contains(&e)
    }

    /// Nearest ancestor (or self) that is not a tag.
    pub fn scalar_of(&self, e: Elem) -> Elem {
        if !self.is_tag(e) {
            return e;
        }
        self.elements()
            .filter(|&c| !self.is_tag(c) && self.leq(e, c))
            .fold(self.top, |best, c| if self.leq(c, best) { c } else { best })
    }

    /// Constants of a constraint set that the lattice does not define.
    pub fn unknown_constants<'a>(
        &self,
        names: impl IntoIterator<Item = &'a String>,
    ) -> Vec<String> {
        names
            .into_iter()
            .filter(|n| self.get(n).is_none())
            .cloned()
            .collect()
    }
}

fn default_doc() -> LatticeDoc {
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut e = |c: &str, p: &str| edges.push((c.to_string(), p.to_string()));
    e("int", "top");
    e("uint", "top");
    e("code-ptr", "top");
    for w in [8, 16, 32, 64] {
        e(&format!("int{w}"), "int");
        e(&format!("uint{w}"), "uint");
        e("bottom", &format!("int{w}"));
        e("bottom", &format!("uint{w}"));
    }
    e("bottom", "code-ptr");
    let mut elements: Vec<String> = ["top", "int", "uint", "code-ptr", "bottom"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for w in [8, 16, 32, 64] {
        elements.push(format!("int{w}"));
        elements.push(format!("uint{w}"));
    }
    LatticeDoc {
        elements,
        edges,
        top: "top".into(),
        bottom: "bottom".into(),
        tags: Vec::new(),
    }
}

/// Element names grouped by their upper covers, for display.
pub fn hasse(l: &Lattice) -> BTreeMap<String, Vec<String>> {
    let mut out = BTreeMap::new();
    for a in l.elements() {
        let ups: Vec<String> = l
            .elements()
            .filter(|&b| b != a && l.leq(a, b))
            .filter(|&b| {
                !l.elements()
                    .any(|c| c != a && c != b && l.leq(a, c) && l.leq(c, b))
            })
            .map(|b| l.name(b).to_string())
            .collect();
        out.insert(l.name(a).to_string(), ups);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(elements: &[&str], edges: &[(&str, &str)]) -> Result<Lattice, LatticeError> {
        Lattice::new(LatticeDoc {
            elements: elements.iter().map(|s| s.to_string()).collect(),
            edges: edges
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            top: "top".into(),
            bottom: "bot".into(),
            tags: vec![],
        })
    }

    fn small() -> Lattice {
        lat(
            &["top", "num", "str", "url", "bot"],
            &[
                ("num", "top"),
                ("str", "top"),
                ("url", "str"),
                ("bot", "num"),
                ("bot", "url"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn four_element_example() {
        let l = small();
        let g = |n| l.get(n).unwrap();
        assert_eq!(l.meet(g("str"), g("num")), g("bot"));
        assert_eq!(l.join(g("str"), g("url")), g("str"));
        assert_eq!(l.join(g("url"), g("num")), g("top"));
    }

    #[test]
    fn two_point_and_diamond() {
        let l = lat(&["top", "bot"], &[("bot", "top")]).unwrap();
        assert_eq!(l.meet(l.top(), l.bottom()), l.bottom());
        let d = lat(
            &["top", "a", "b", "bot"],
            &[("a", "top"), ("b", "top"), ("bot", "a"), ("bot", "b")],
        )
        .unwrap();
        let (a, b) = (d.get("a").unwrap(), d.get("b").unwrap());
        assert_eq!(d.join(a, b), d.top());
        assert_eq!(d.meet(a, b), d.bottom());
    }

    #[test]
    fn rejects_non_lattices() {
        let bowtie = lat(
            &["top", "a", "b", "c", "d", "bot"],
            &[
                ("a", "top"),
                ("b", "top"),
                ("c", "a"),
                ("c", "b"),
                ("d", "a"),
                ("d", "b"),
                ("bot", "c"),
                ("bot", "d"),
            ],
        );
        assert!(matches!(bowtie, Err(LatticeError::NotALattice { .. })));
        assert!(matches!(
            lat(&["top", "bot"], &[("top", "bot"), ("bot", "top")]),
            Err(LatticeError::Cycle(_))
        ));
        assert!(matches!(
            lat(&["top", "bot", "x"], &[("bot", "top")]),
            Err(LatticeError::NotTop(_))
        ));
        assert!(matches!(
            lat(&["top", "bot"], &[("bot", "nope")]),
            Err(LatticeError::UnknownElement(_))
        ));
    }

    #[test]
    fn default_lattice_and_tags() {
        let l = Lattice::default_with_tags(&[("FileDescriptor", "int"), ("SuccessZ", "int")]);
        let g = |n| l.get(n).unwrap();
        assert_eq!(l.join(g("int32"), g("uint32")), l.top());
        assert_eq!(l.join(g("FileDescriptor"), g("SuccessZ")), g("int"));
        assert_eq!(l.meet(g("int"), g("#FileDescriptor")), g("FileDescriptor"));
        assert_eq!(l.scalar_of(g("SuccessZ")), g("int"));
        assert!(l.is_tag(g("SuccessZ")));
        let back = Lattice::from_json(&l.to_json()).unwrap();
        assert_eq!(back, l);
    }
}
