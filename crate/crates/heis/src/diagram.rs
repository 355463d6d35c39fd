//! String-diagram syntax: object words, boxes, sliced diagrams and formal
//! linear combinations.
//!
//! Conventions (fixed once, used everywhere):
//! - Diagrams are read bottom to top; `compose(top, bottom)` stacks `top`
//!   over `bottom`. Slices are stored bottom first.
//! - Letters are `Up` (the generating object Q+) or `Down` (Q-), optionally
//!   colored by a component index of the ambient Frobenius algebra.
//! - Crossings:
//!   `CrossUU`  s  : (Up a, Up b)    -> (Up b, Up a)
//!   `CrossDD`      : (Down a, Down b) -> (Down b, Down a)
//!   `CrossT`   t  : (Up u, Down d) -> (Down d, Up u)
//!   `CrossTP`  t' : (Down d, Up u) -> (Up u, Down d)
//! - Cups and caps:
//!   `CupR` c : 1 -> (Down, Up)     `CapR` d  : (Up, Down) -> 1
//!   `CupL` c': 1 -> (Up, Down)     `CapL` d' : (Down, Up) -> 1
//!   `SqCup(r,b)` : 1 -> (Up, Down)  decorated left cup, 0 <= r <= k-1
//!   `SqCap(r,b)` : (Down, Up) -> 1  decorated left cap, 0 <= r <= -k-1
//! - `Dot` carries a power; `Tok` carries algebra-element coordinates. Both
//!   exist on up and down strands.
//!
//! A `DiagramTerm` is kept in a canonical "staircase" form: exactly one
//! non-identity box per slice, boxes sunk as low as the wiring allows and
//! ordered left to right among independently placeable boxes, tokens slid to
//! the flow-start anchor of their strand, dots floated up within their
//! crossing-free run. Tokens merge, unit tokens vanish, dot powers add.
//! Planar-isotopic words in the free monoidal language then compare equal
//! before any relation is applied.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::bubbles::BubblePoly;
use crate::frobenius::{Coords, FrobeniusAlgebra};
use crate::scalar::{one, zero, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Orient {
    Up,
    Down,
}

impl Orient {
    pub fn flip(self) -> Orient {
        match self {
            Orient::Up => Orient::Down,
            Orient::Down => Orient::Up,
        }
    }
}

pub type Color = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter {
    pub orient: Orient,
    pub color: Option<Color>,
}

impl Letter {
    pub fn up(color: Option<Color>) -> Letter {
        Letter { orient: Orient::Up, color }
    }
    pub fn down(color: Option<Color>) -> Letter {
        Letter { orient: Orient::Down, color }
    }
    /// Letters are compatible when orientations agree and colors unify
    /// (an uncolored letter matches any color).
    pub fn unifies(&self, other: &Letter) -> bool {
        self.orient == other.orient
            && match (self.color, other.color) {
                (Some(a), Some(b)) => a == b,
                _ => true,
            }
    }
    pub fn join(&self, other: &Letter) -> Option<Letter> {
        if !self.unifies(other) {
            return None;
        }
        Some(Letter { orient: self.orient, color: self.color.or(other.color) })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ObjectWord(pub Vec<Letter>);

impl ObjectWord {
    pub fn empty() -> Self {
        ObjectWord(Vec::new())
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn concat(&self, other: &ObjectWord) -> ObjectWord {
        let mut v = self.0.clone();
        v.extend(other.0.iter().copied());
        ObjectWord(v)
    }
    pub fn unifies(&self, other: &ObjectWord) -> bool {
        self.len() == other.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.unifies(b))
    }
    /// Orientation-only comparison, ignoring colors.
    pub fn same_shape(&self, other: &ObjectWord) -> bool {
        self.len() == other.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.orient == b.orient)
    }
    pub fn uncolored(&self) -> ObjectWord {
        ObjectWord(self.0.iter().map(|l| Letter { orient: l.orient, color: None }).collect())
    }
}

impl fmt::Display for ObjectWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for l in &self.0 {
            match (l.orient, l.color) {
                (Orient::Up, None) => write!(f, "+")?,
                (Orient::Down, None) => write!(f, "-")?,
                (Orient::Up, Some(i)) => write!(f, "+{}", i + 1)?,
                (Orient::Down, Some(i)) => write!(f, "-{}", i + 1)?,
            }
        }
        Ok(())
    }
}

/// A single generator box. Colors are 0-based component indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GenBox {
    Id(Letter),
    Dot { power: u32, orient: Orient, color: Option<Color> },
    Tok { coords: Coords, orient: Orient, color: Option<Color> },
    CrossUU { cl: Option<Color>, cr: Option<Color> },
    CrossDD { cl: Option<Color>, cr: Option<Color> },
    CrossT { cu: Option<Color>, cd: Option<Color> },
    CrossTP { cu: Option<Color>, cd: Option<Color> },
    CupR { color: Option<Color> },
    CapR { color: Option<Color> },
    CupL { color: Option<Color> },
    CapL { color: Option<Color> },
    SqCup { dots: u32, token: usize, colored: bool },
    SqCap { dots: u32, token: usize, colored: bool },
}

use GenBox::*;

impl GenBox {
    pub fn dom(&self, alg: &FrobeniusAlgebra) -> ObjectWord {
        match self {
            Id(l) => ObjectWord(vec![*l]),
            Dot { orient, color, .. } | Tok { orient, color, .. } => {
                ObjectWord(vec![Letter { orient: *orient, color: *color }])
            }
            CrossUU { cl, cr } => ObjectWord(vec![Letter::up(*cl), Letter::up(*cr)]),
            CrossDD { cl, cr } => ObjectWord(vec![Letter::down(*cl), Letter::down(*cr)]),
            CrossT { cu, cd } => ObjectWord(vec![Letter::up(*cu), Letter::down(*cd)]),
            CrossTP { cu, cd } => ObjectWord(vec![Letter::down(*cd), Letter::up(*cu)]),
            CupR { .. } | CupL { .. } | SqCup { .. } => ObjectWord::empty(),
            CapR { color } => ObjectWord(vec![Letter::up(*color), Letter::down(*color)]),
            CapL { color } => ObjectWord(vec![Letter::down(*color), Letter::up(*color)]),
            SqCap { token, colored, .. } => {
                let c = if *colored { Some(alg.component_of(*token)) } else { None };
                ObjectWord(vec![Letter::down(c), Letter::up(c)])
            }
        }
    }

    pub fn cod(&self, alg: &FrobeniusAlgebra) -> ObjectWord {
        match self {
            Id(l) => ObjectWord(vec![*l]),
            Dot { orient, color, .. } | Tok { orient, color, .. } => {
                ObjectWord(vec![Letter { orient: *orient, color: *color }])
            }
            CrossUU { cl, cr } => ObjectWord(vec![Letter::up(*cr), Letter::up(*cl)]),
            CrossDD { cl, cr } => ObjectWord(vec![Letter::down(*cr), Letter::down(*cl)]),
            CrossT { cu, cd } => ObjectWord(vec![Letter::down(*cd), Letter::up(*cu)]),
            CrossTP { cu, cd } => ObjectWord(vec![Letter::up(*cu), Letter::down(*cd)]),
            CapR { .. } | CapL { .. } | SqCap { .. } => ObjectWord::empty(),
            CupR { color } => ObjectWord(vec![Letter::down(*color), Letter::up(*color)]),
            CupL { color } => ObjectWord(vec![Letter::up(*color), Letter::down(*color)]),
            SqCup { token, colored, .. } => {
                let c = if *colored { Some(alg.component_of(*token)) } else { None };
                ObjectWord(vec![Letter::up(c), Letter::down(c)])
            }
        }
    }

    pub fn is_id(&self) -> bool {
        matches!(self, Id(_))
    }

    /// Wiring inside the box: pairs of connected ports. Ports are numbered
    /// `Dom(i)` / `Cod(i)`. Decorated cups and caps do NOT connect their legs:
    /// tokens may not slide across the square label.
    pub fn wiring(&self) -> Vec<(Port, Port)> {
        use Port::*;
        match self {
            Id(_) | Dot { .. } | Tok { .. } => vec![(Dom(0), Cod(0))],
            CrossUU { .. } | CrossDD { .. } | CrossT { .. } | CrossTP { .. } => {
                vec![(Dom(0), Cod(1)), (Dom(1), Cod(0))]
            }
            CupR { .. } | CupL { .. } => vec![(Cod(0), Cod(1))],
            CapR { .. } | CapL { .. } => vec![(Dom(0), Dom(1))],
            SqCup { .. } | SqCap { .. } => vec![],
        }
    }

    fn crossing_weight(&self) -> (u32, u32) {
        // (total crossings, same-orientation crossings)
        match self {
            CrossUU { .. } | CrossDD { .. } => (1, 1),
            CrossT { .. } | CrossTP { .. } => (1, 0),
            _ => (0, 0),
        }
    }

    fn cupcap_weight(&self) -> u32 {
        match self {
            CupR { .. } | CupL { .. } | CapR { .. } | CapL { .. } | SqCup { .. }
            | SqCap { .. } => 1,
            _ => 0,
        }
    }

    fn square_weight(&self) -> u32 {
        matches!(self, SqCup { .. } | SqCap { .. }) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Port {
    Dom(usize),
    Cod(usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiagramError {
    #[error("boundary mismatch: cannot compose codomain {0} with domain {1}")]
    BoundaryMismatch(String, String),
    #[error("tensor/composition arity error: {0}")]
    Malformed(String),
}

/// Ambient data the syntax layer needs: the algebra (for token coordinates
/// and square labels) and whether the presentation is colored.
#[derive(Debug, Clone)]
pub struct DiagramContext {
    pub algebra: FrobeniusAlgebra,
    pub colored: bool,
}

impl DiagramContext {
    pub fn new(algebra: FrobeniusAlgebra, colored: bool) -> Self {
        DiagramContext { algebra, colored }
    }
}

/// One planar diagram in staircase form: `slices[i] = (offset, box)` acting on
/// the word at level i, everything else identity wires.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DiagramTerm {
    pub dom: ObjectWord,
    pub slices: Vec<(usize, GenBox)>,
}

impl DiagramTerm {
    pub fn identity(word: ObjectWord) -> Self {
        DiagramTerm { dom: word, slices: Vec::new() }
    }

    /// Words at each horizontal level, from `dom` (level 0) upward.
    pub fn levels(&self, alg: &FrobeniusAlgebra) -> Vec<ObjectWord> {
        let mut out = Vec::with_capacity(self.slices.len() + 1);
        let mut w = self.dom.clone();
        out.push(w.clone());
        for (off, b) in &self.slices {
            let bd = b.dom(alg);
            let bc = b.cod(alg);
            let mut next: Vec<Letter> = Vec::with_capacity(w.len() - bd.len() + bc.len());
            next.extend(w.0[..*off].iter().copied());
            next.extend(bc.0.iter().copied());
            next.extend(w.0[off + bd.len()..].iter().copied());
            w = ObjectWord(next);
            out.push(w.clone());
        }
        out
    }

    pub fn cod(&self, alg: &FrobeniusAlgebra) -> ObjectWord {
        self.levels(alg).pop().unwrap()
    }

    /// Validate internal boundary consistency (orientations must match;
    /// colors must unify level by level).
    pub fn validate(&self, alg: &FrobeniusAlgebra) -> Result<(), DiagramError> {
        let mut w = self.dom.clone();
        for (off, b) in &self.slices {
            let bd = b.dom(alg);
            if *off + bd.len() > w.len() {
                return Err(DiagramError::Malformed(format!(
                    "box {:?} at offset {} does not fit word {}",
                    b, off, w
                )));
            }
            for (i, l) in bd.0.iter().enumerate() {
                if !w.0[off + i].unifies(l) {
                    return Err(DiagramError::BoundaryMismatch(
                        w.to_string(),
                        format!("{:?}@{}", b, off),
                    ));
                }
            }
            let bc = b.cod(alg);
            let mut next: Vec<Letter> = Vec::new();
            next.extend(w.0[..*off].iter().copied());
            next.extend(bc.0.iter().copied());
            next.extend(w.0[off + bd.len()..].iter().copied());
            w = ObjectWord(next);
        }
        Ok(())
    }

    pub fn measure_counts(&self) -> (u32, u32, u32, u32) {
        let mut crossings = 0;
        let mut same = 0;
        let mut squares = 0;
        let mut cupcaps = 0;
        for (_, b) in &self.slices {
            let (c, s) = b.crossing_weight();
            crossings += c;
            same += s;
            squares += b.square_weight();
            cupcaps += b.cupcap_weight();
        }
        (crossings, squares, cupcaps, same)
    }
}

/// A formal linear combination of diagrams with common (unifiable) boundary.
/// Coefficients live in the commutative ring of bubble polynomials: exact
/// rationals plus formal products of genuine (undetermined) bubbles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MorphismExpr {
    pub dom: ObjectWord,
    pub cod: ObjectWord,
    pub terms: BTreeMap<DiagramTerm, BubblePoly>,
}

impl MorphismExpr {
    pub fn zero(dom: ObjectWord, cod: ObjectWord) -> Self {
        MorphismExpr { dom, cod, terms: BTreeMap::new() }
    }

    pub fn identity(word: ObjectWord) -> Self {
        let t = DiagramTerm::identity(word.clone());
        let mut terms = BTreeMap::new();
        terms.insert(t, BubblePoly::one());
        MorphismExpr { dom: word.clone(), cod: word, terms }
    }

    pub fn from_term(ctx: &DiagramContext, t: DiagramTerm) -> Self {
        Self::from_term_coeff(ctx, t, BubblePoly::one())
    }

    pub fn from_term_coeff(ctx: &DiagramContext, t: DiagramTerm, c: BubblePoly) -> Self {
        let dom = t.dom.clone();
        let cod = t.cod(&ctx.algebra);
        let mut e = MorphismExpr::zero(dom, cod);
        e.add_term(t, c);
        e
    }

    /// Single box as an expression.
    pub fn gen(ctx: &DiagramContext, b: GenBox) -> Self {
        let dom = b.dom(&ctx.algebra);
        let t = DiagramTerm { dom, slices: vec![(0, b)] };
        Self::from_term(ctx, t)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn add_term(&mut self, t: DiagramTerm, c: BubblePoly) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(t.clone()).or_insert_with(BubblePoly::zero);
        entry.add_assign(&c);
        if entry.is_zero() {
            self.terms.remove(&t);
        }
    }

    pub fn scale(&self, s: &Scalar) -> MorphismExpr {
        let mut out = MorphismExpr::zero(self.dom.clone(), self.cod.clone());
        for (t, c) in &self.terms {
            out.add_term(t.clone(), c.scale(s));
        }
        out
    }

    pub fn scale_poly(&self, p: &BubblePoly) -> MorphismExpr {
        let mut out = MorphismExpr::zero(self.dom.clone(), self.cod.clone());
        for (t, c) in &self.terms {
            out.add_term(t.clone(), c.mul(p));
        }
        out
    }

    pub fn add(&self, other: &MorphismExpr) -> Result<MorphismExpr, DiagramError> {
        if !self.dom.same_shape(&other.dom) || !self.cod.same_shape(&other.cod) {
            return Err(DiagramError::BoundaryMismatch(
                format!("{} -> {}", self.dom, self.cod),
                format!("{} -> {}", other.dom, other.cod),
            ));
        }
        let mut out = self.clone();
        for (t, c) in &other.terms {
            out.add_term(t.clone(), c.clone());
        }
        // boundary colors: keep the coarser (uncolored on disagreement)
        out.dom = join_words(&self.dom, &other.dom);
        out.cod = join_words(&self.cod, &other.cod);
        Ok(out)
    }

    pub fn sub(&self, other: &MorphismExpr) -> Result<MorphismExpr, DiagramError> {
        self.add(&other.scale(&-one()))
    }

    pub fn boundary(&self) -> (ObjectWord, ObjectWord) {
        (self.dom.clone(), self.cod.clone())
    }
}

fn join_words(a: &ObjectWord, b: &ObjectWord) -> ObjectWord {
    ObjectWord(
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| Letter {
                orient: x.orient,
                color: if x.color == y.color { x.color } else { None },
            })
            .collect(),
    )
}

/// Categorical composition: `top` after `bottom`, bilinear; terms whose
/// colored boundaries fail to unify contribute zero.
pub fn compose(
    ctx: &DiagramContext,
    top: &MorphismExpr,
    bottom: &MorphismExpr,
) -> Result<MorphismExpr, DiagramError> {
    if !bottom.cod.same_shape(&top.dom) {
        return Err(DiagramError::BoundaryMismatch(
            bottom.cod.to_string(),
            top.dom.to_string(),
        ));
    }
    let mut out = MorphismExpr::zero(bottom.dom.clone(), top.cod.clone());
    for (tb, cb) in &bottom.terms {
        let mid_b = tb.cod(&ctx.algebra);
        for (tt, ct) in &top.terms {
            if !mid_b.unifies(&tt.dom) {
                continue; // color mismatch: zero contribution
            }
            let mut slices = tb.slices.clone();
            slices.extend(tt.slices.iter().cloned());
            let term = DiagramTerm { dom: tb.dom.clone(), slices };
            let term = canonicalize(ctx, term);
            match term {
                Some(t) => out.add_term(t, cb.mul(ct)),
                None => {} // color conflict inside: zero
            }
        }
    }
    Ok(out)
}

/// Monoidal product, bilinear.
pub fn tensor(
    ctx: &DiagramContext,
    left: &MorphismExpr,
    right: &MorphismExpr,
) -> Result<MorphismExpr, DiagramError> {
    let dom = left.dom.concat(&right.dom);
    let cod = left.cod.concat(&right.cod);
    let mut out = MorphismExpr::zero(dom, cod);
    for (tl, cl) in &left.terms {
        let shift = tl.cod(&ctx.algebra).len();
        for (tr, cr) in &right.terms {
            // left's slices first at their own offsets; right's slices fire
            // after left is fully applied, so their offsets shift by left's
            // codomain width.
            let mut slices = tl.slices.clone();
            for (off, b) in &tr.slices {
                slices.push((shift + off, b.clone()));
            }
            let term = DiagramTerm { dom: tl.dom.concat(&tr.dom), slices };
            if let Some(t) = canonicalize(ctx, term) {
                out.add_term(t, cl.mul(cr));
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Canonicalization
// ---------------------------------------------------------------------------

/// Port identifier in a sliced diagram: the wire at `(level, position)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Wire {
    pub level: usize,
    pub pos: usize,
}

/// Bring a raw slice list into the syntactic staircase form: identity boxes
/// dropped, colors unified along strands (zero on conflict), boxes sunk into
/// the greedy interchange normal form. This captures exactly planar isotopy
/// of the free monoidal word; no relation of the category is applied here.
pub fn canonicalize(ctx: &DiagramContext, term: DiagramTerm) -> Option<DiagramTerm> {
    let t = explode(ctx, term);
    let t = color_propagate(ctx, t)?;
    let tagged = TaggedTerm {
        dom: t.dom.clone(),
        slices: t.slices.iter().cloned().enumerate().map(|(i, (o, b))| (o, b, i)).collect(),
    };
    Some(sink_boxes(ctx, tagged).untagged())
}

/// Full decoration normalization on top of the staircase form: tokens slide
/// (freely) to the flow-start anchor of their strand and merge, unit tokens
/// vanish, dots float to the top of the first up segment of their
/// crossing-free run and their powers add. Applying this is sound in every
/// presentation (token slides, token merging, dot-token commutation and the
/// rotation/pivotality moves are relations everywhere); the rewrite engine
/// exposes it as its first rule. Returns `None` when the term dies (a token
/// becomes zero).
pub fn anchored_form(ctx: &DiagramContext, term: DiagramTerm) -> Option<DiagramTerm> {
    let t = explode(ctx, term);
    let t = color_propagate(ctx, t)?;
    let (skeleton, decs) = strip_decorations(ctx, t)?;
    let skeleton = sink_boxes(ctx, skeleton);
    reinsert_decorations(ctx, skeleton, decs)
}

fn explode(ctx: &DiagramContext, term: DiagramTerm) -> DiagramTerm {
    // split any accidental multi-box content is not possible in this
    // representation (one box per slice already); just drop Id boxes.
    let alg = &ctx.algebra;
    let mut slices = Vec::new();
    let mut w = term.dom.clone();
    for (off, b) in term.slices {
        let bd = b.dom(alg);
        let bc = b.cod(alg);
        if !b.is_id() {
            slices.push((off, b.clone()));
        }
        let mut next: Vec<Letter> = Vec::new();
        next.extend(w.0[..off].iter().copied());
        next.extend(bc.0.iter().copied());
        next.extend(w.0[off + bd.len()..].iter().copied());
        w = ObjectWord(next);
    }
    DiagramTerm { dom: term.dom, slices }
}

/// Strand decomposition: for every wire (level, pos) an id of its strand.
pub struct Strands {
    pub wire_strand: BTreeMap<Wire, usize>,
    pub n_strands: usize,
    /// for each strand: the list of wires in flow order
    pub flow: Vec<Vec<Wire>>,
    /// strands that form closed loops
    pub closed: Vec<bool>,
}

/// Union of wires into strands. Crossings connect through, cups/caps bend,
/// squares are barriers. Tokens/dots/ids pass through.
pub fn strand_decomposition(alg: &FrobeniusAlgebra, t: &DiagramTerm) -> Strands {
    let levels = t.levels(alg);
    let n_levels = levels.len();
    // wires: between level l and l+1 the word is levels[l+1]... define a wire
    // as a position at a LEVEL: level 0 = dom boundary, level n = cod.
    // Adjacent levels are connected by the slice between them.
    let mut dsu = Dsu::new();
    let mut ids: BTreeMap<Wire, usize> = BTreeMap::new();
    for (l, w) in levels.iter().enumerate() {
        for p in 0..w.len() {
            let id = dsu.add();
            ids.insert(Wire { level: l, pos: p }, id);
        }
    }
    // connections across each slice
    for (l, (off, b)) in t.slices.iter().enumerate() {
        let bd = b.dom(alg).len();
        let bc = b.cod(alg).len();
        let below = levels[l].len();
        // wires left of the box pass straight
        for p in 0..*off {
            dsu.union(ids[&Wire { level: l, pos: p }], ids[&Wire { level: l + 1, pos: p }]);
        }
        for p in off + bd..below {
            dsu.union(
                ids[&Wire { level: l, pos: p }],
                ids[&Wire { level: l + 1, pos: p - bd + bc }],
            );
        }
        for (a, bport) in b.wiring() {
            let wa = port_wire(l, *off, a);
            let wb = port_wire(l, *off, bport);
            dsu.union(ids[&wa], ids[&wb]);
        }
    }
    // collapse to strand indices
    let mut repr_to_idx: BTreeMap<usize, usize> = BTreeMap::new();
    let mut wire_strand = BTreeMap::new();
    for (w, id) in &ids {
        let r = dsu.find(*id);
        let next = repr_to_idx.len();
        let idx = *repr_to_idx.entry(r).or_insert(next);
        wire_strand.insert(*w, idx);
    }
    let n_strands = repr_to_idx.len();
    // flow order & closedness: walk each strand from its flow start.
    let mut flow = vec![Vec::new(); n_strands];
    let mut closed = vec![true; n_strands];
    // boundary wires are open ends
    let top = n_levels - 1;
    for p in 0..levels[0].len() {
        closed[wire_strand[&Wire { level: 0, pos: p }]] = false;
    }
    for p in 0..levels[top].len() {
        closed[wire_strand[&Wire { level: top, pos: p }]] = false;
    }
    // squares also break strands into open pieces
    for (l, (off, b)) in t.slices.iter().enumerate() {
        if let SqCup { .. } = b {
            closed[wire_strand[&Wire { level: l + 1, pos: *off }]] = false;
            closed[wire_strand[&Wire { level: l + 1, pos: *off + 1 }]] = false;
        }
        if let SqCap { .. } = b {
            closed[wire_strand[&Wire { level: l, pos: *off }]] = false;
            closed[wire_strand[&Wire { level: l, pos: *off + 1 }]] = false;
        }
    }
    for (w, s) in &wire_strand {
        flow[*s].push(*w);
    }
    Strands { wire_strand, n_strands, flow, closed }
}

fn port_wire(slice_level: usize, off: usize, p: Port) -> Wire {
    match p {
        Port::Dom(i) => Wire { level: slice_level, pos: off + i },
        Port::Cod(i) => Wire { level: slice_level + 1, pos: off + i },
    }
}

struct Dsu {
    parent: Vec<usize>,
}
impl Dsu {
    fn new() -> Self {
        Dsu { parent: Vec::new() }
    }
    fn add(&mut self) -> usize {
        let id = self.parent.len();
        self.parent.push(id);
        id
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Propagate strand colors: every wire on a strand must carry the same color.
/// Boxes adopt the strand colors of their legs. Conflicts mean the term is
/// zero (`None`). In an uncolored context colors are left untouched.
fn color_propagate(ctx: &DiagramContext, t: DiagramTerm) -> Option<DiagramTerm> {
    let alg = &ctx.algebra;
    let strands = strand_decomposition(alg, &t);
    let levels = t.levels(alg);
    let mut color: Vec<Option<Color>> = vec![None; strands.n_strands];
    let mut conflict = false;
    let mut observe = |sl: &mut Vec<Option<Color>>, s: usize, c: Option<Color>| {
        if let Some(c) = c {
            match sl[s] {
                None => sl[s] = Some(c),
                Some(old) if old != c => conflict = true,
                _ => {}
            }
        }
    };
    for (l, w) in levels.iter().enumerate() {
        for (p, letter) in w.0.iter().enumerate() {
            let s = strands.wire_strand[&Wire { level: l, pos: p }];
            observe(&mut color, s, letter.color);
        }
    }
    if conflict {
        return None;
    }
    if !ctx.colored {
        // In the uncolored presentation strand colors are not data; make sure
        // none slipped in and return as-is.
        return Some(t);
    }
    // rewrite boxes and dom with propagated colors
    let strand_at = |l: usize, p: usize| strands.wire_strand[&Wire { level: l, pos: p }];
    let mut dom = t.dom.clone();
    for (p, letter) in dom.0.iter_mut().enumerate() {
        letter.color = color[strand_at(0, p)];
    }
    let mut slices = Vec::with_capacity(t.slices.len());
    for (l, (off, b)) in t.slices.iter().enumerate() {
        let c_at = |port: Port| -> Option<Color> {
            let w = port_wire(l, *off, port);
            color[strands.wire_strand[&w]]
        };
        let nb = match b.clone() {
            Id(mut letter) => {
                letter.color = c_at(Port::Dom(0));
                Id(letter)
            }
            Dot { power, orient, .. } => Dot { power, orient, color: c_at(Port::Dom(0)) },
            Tok { coords, orient, .. } => {
                let col = c_at(Port::Dom(0));
                let coords = match col {
                    Some(i) => alg.project_coords(&coords, i),
                    None => coords,
                };
                Tok { coords, orient, color: col }
            }
            CrossUU { .. } => CrossUU { cl: c_at(Port::Dom(0)), cr: c_at(Port::Dom(1)) },
            CrossDD { .. } => CrossDD { cl: c_at(Port::Dom(0)), cr: c_at(Port::Dom(1)) },
            CrossT { .. } => CrossT { cu: c_at(Port::Dom(0)), cd: c_at(Port::Dom(1)) },
            CrossTP { .. } => CrossTP { cu: c_at(Port::Dom(1)), cd: c_at(Port::Dom(0)) },
            CupR { .. } => CupR { color: c_at(Port::Cod(0)) },
            CapR { .. } => CapR { color: c_at(Port::Dom(0)) },
            CupL { .. } => CupL { color: c_at(Port::Cod(0)) },
            CapL { .. } => CapL { color: c_at(Port::Dom(0)) },
            SqCup { dots, token, .. } => SqCup { dots, token, colored: true },
            SqCap { dots, token, .. } => SqCap { dots, token, colored: true },
        };
        // a colored token that projected to zero kills the term
        if let Tok { coords, .. } = &nb {
            if coords.iter().all(|c| c == &zero()) {
                return None;
            }
        }
        slices.push((*off, nb));
    }
    Some(DiagramTerm { dom, slices })
}

/// Stripped decoration data, keyed by strand and run so it survives the
/// interchange reordering of the skeleton.
pub struct Decorations {
    /// merged token coordinates per strand key
    tokens: BTreeMap<StrandKey, Coords>,
    /// summed dot power per (strand key, run ordinal along the flow)
    dots: BTreeMap<(StrandKey, usize), u32>,
}

/// A stable identifier for a strand: the smallest stable port on it. Stable
/// ports are boundary positions and (skeleton box index, port) pairs; both
/// survive interchange because the box list keeps its identity through
/// sinking (boxes are tagged) and dom/cod positions never move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum StrandKey {
    DomPos(usize),
    CodPos(usize),
    BoxPort(usize, u8),
}

/// Remove all Dot/Tok boxes, merging them into per-strand data.
fn strip_decorations(
    ctx: &DiagramContext,
    t: DiagramTerm,
) -> Option<(TaggedTerm, Decorations)> {
    let alg = &ctx.algebra;
    // split decorations from structure, keeping wires in "stripped" coords
    let mut skel_slices: Vec<(usize, GenBox, usize)> = Vec::new(); // (off, box, tag)
    let mut pending: Vec<(Wire, GenBox)> = Vec::new();
    let mut structural_below = 0usize;
    for (off, b) in &t.slices {
        match b {
            Dot { .. } | Tok { .. } => {
                pending.push((Wire { level: structural_below, pos: *off }, b.clone()));
            }
            _ => {
                skel_slices.push((*off, b.clone(), structural_below));
                structural_below += 1;
            }
        }
    }
    let skeleton = TaggedTerm { dom: t.dom.clone(), slices: skel_slices };
    let geo = Geometry::build(alg, &skeleton);
    // accumulate decorations in flow order: sort by (strand, flow index)
    let mut items: Vec<(usize, usize, GenBox)> = pending
        .into_iter()
        .map(|(w, b)| {
            let s = geo.strands.wire_strand[&w];
            let fi = geo.flow[s].iter().position(|x| *x == w).unwrap();
            (s, fi, b)
        })
        .collect();
    items.sort_by_key(|(s, fi, _)| (*s, *fi));
    let mut tokens: BTreeMap<StrandKey, Coords> = BTreeMap::new();
    let mut dots: BTreeMap<(StrandKey, usize), u32> = BTreeMap::new();
    for (s, fi, b) in items {
        let key = geo.strand_key(s);
        match b {
            Tok { coords, .. } => {
                let entry = tokens.remove(&key);
                let merged = match entry {
                    None => coords,
                    // later in flow multiplies on the left
                    Some(prev) => alg.mul_coords(&coords, &prev),
                };
                tokens.insert(key, merged);
            }
            Dot { power, .. } => {
                let run = geo.runs[s].run_of(fi);
                *dots.entry((key, run)).or_insert(0) += power;
            }
            _ => unreachable!(),
        }
    }
    Some((skeleton, Decorations { tokens, dots }))
}

fn reinsert_decorations(
    ctx: &DiagramContext,
    skeleton: TaggedTerm,
    decs: Decorations,
) -> Option<DiagramTerm> {
    let alg = &ctx.algebra;
    let geo = Geometry::build(alg, &skeleton);
    let key_to_strand: BTreeMap<StrandKey, usize> =
        (0..geo.strands.n_strands).map(|s| (geo.strand_key(s), s)).collect();
    let mut inserts: Vec<(Wire, u8, GenBox)> = Vec::new();
    for (key, coords) in &decs.tokens {
        if coords.iter().all(|c| c == &zero()) {
            return None;
        }
        let s = *key_to_strand.get(key)?;
        let color = geo.strand_color(alg, s);
        let coords = match (ctx.colored, color) {
            (true, Some(i)) => alg.project_coords(coords, i),
            _ => coords.clone(),
        };
        if coords.iter().all(|c| c == &zero()) {
            return None;
        }
        let is_unit = match (ctx.colored, color) {
            (true, Some(i)) => &coords == alg.idempotent_coords(i).ok()?,
            _ => &coords == alg.unit_coords(),
        };
        if is_unit {
            continue;
        }
        let w = geo.token_anchor(s);
        let orient = geo.oriented[&w];
        inserts.push((w, 0, Tok { coords, orient, color }));
    }
    for ((key, run), power) in &decs.dots {
        if *power == 0 {
            continue;
        }
        let s = *key_to_strand.get(key)?;
        let w = geo.runs[s].dot_anchor(*run, &geo.oriented);
        let orient = geo.oriented[&w];
        let color = geo.strand_color(alg, s);
        inserts.push((w, 1, Dot { power: *power, orient, color }));
    }
    // insert decoration slices; they are width preserving so positions of
    // later inserts stay valid. Tok sorts before Dot on the same wire.
    inserts.sort_by_key(|(w, rank, _)| (w.level, w.pos, *rank));
    let mut slices: Vec<(usize, GenBox)> = Vec::new();
    let mut ins = inserts.into_iter().peekable();
    let n = skeleton.slices.len();
    for level in 0..=n {
        while let Some((w, _, _)) = ins.peek() {
            if w.level == level {
                let (w, _, b) = ins.next().unwrap();
                slices.push((w.pos, b));
            } else {
                break;
            }
        }
        if level < n {
            let (off, b, _) = &skeleton.slices[level];
            slices.push((*off, b.clone()));
        }
    }
    Some(DiagramTerm { dom: skeleton.dom, slices })
}

/// Skeleton with per-box identity tags that survive reordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedTerm {
    dom: ObjectWord,
    slices: Vec<(usize, GenBox, usize)>,
}

impl TaggedTerm {
    fn untagged(&self) -> DiagramTerm {
        DiagramTerm {
            dom: self.dom.clone(),
            slices: self.slices.iter().map(|(o, b, _)| (*o, b.clone())).collect(),
        }
    }
}

/// Cached geometric data of a skeleton: strands, flow orders, runs,
/// orientations, and stable keys.
struct Geometry {
    strands: Strands,
    flow: Vec<Vec<Wire>>,
    runs: Vec<RunTable>,
    oriented: BTreeMap<Wire, Orient>,
    /// stable ports per wire: the wire's attachment, if any
    stable: BTreeMap<Wire, StrandKey>,
    colors: Vec<Option<Color>>,
}

impl Geometry {
    fn build(alg: &FrobeniusAlgebra, tt: &TaggedTerm) -> Geometry {
        let term = tt.untagged();
        let strands = strand_decomposition(alg, &term);
        let oriented = wire_orientations(alg, &term);
        // stable ports: boundary wires and box-adjacent wires (tagged)
        let mut stable: BTreeMap<Wire, StrandKey> = BTreeMap::new();
        let levels = term.levels(alg);
        let n_levels = levels.len();
        for p in 0..levels[0].len() {
            stable.insert(Wire { level: 0, pos: p }, StrandKey::DomPos(p));
        }
        for p in 0..levels[n_levels - 1].len() {
            stable
                .entry(Wire { level: n_levels - 1, pos: p })
                .or_insert(StrandKey::CodPos(p));
        }
        for (l, (off, b, tag)) in tt.slices.iter().enumerate() {
            let bd = b.dom(alg).len();
            let bc = b.cod(alg).len();
            for i in 0..bd {
                stable
                    .entry(Wire { level: l, pos: off + i })
                    .or_insert(StrandKey::BoxPort(*tag, i as u8));
            }
            for i in 0..bc {
                stable
                    .entry(Wire { level: l + 1, pos: off + i })
                    .or_insert(StrandKey::BoxPort(*tag, (bd + i) as u8));
            }
        }
        let flow = flow_orders(alg, &term, &strands, &stable);
        let runs = flow
            .iter()
            .map(|f| runs_of_strand(alg, &term, f))
            .collect();
        let mut colors = vec![None; strands.n_strands];
        for (w, s) in &strands.wire_strand {
            if let Some(c) = levels[w.level].0[w.pos].color {
                colors[*s] = Some(c);
            }
        }
        let _ = (term, n_levels);
        Geometry { strands, flow, runs, oriented, stable, colors }
    }

    fn strand_key(&self, s: usize) -> StrandKey {
        self.flow[s]
            .iter()
            .filter_map(|w| self.stable.get(w))
            .min()
            .copied()
            .expect("every strand touches a stable port")
    }

    fn strand_color(&self, _alg: &FrobeniusAlgebra, s: usize) -> Option<Color> {
        self.colors[s]
    }

    fn token_anchor(&self, s: usize) -> Wire {
        if self.strands.closed[s] {
            self.flow[s]
                .iter()
                .copied()
                .find(|w| self.oriented[w] == Orient::Up)
                .unwrap_or(self.flow[s][0])
        } else {
            self.flow[s][0]
        }
    }
}

/// Orientation of each wire.
fn wire_orientations(alg: &FrobeniusAlgebra, t: &DiagramTerm) -> BTreeMap<Wire, Orient> {
    let levels = t.levels(alg);
    let mut out = BTreeMap::new();
    for (l, w) in levels.iter().enumerate() {
        for (p, letter) in w.0.iter().enumerate() {
            out.insert(Wire { level: l, pos: p }, letter.orient);
        }
    }
    out
}

/// Flow-ordered wires per strand. Flow enters at a boundary (bottom for Up,
/// top for Down), leaves a square on its outgoing leg, or, for closed loops,
/// starts at the wire carrying the strand's smallest stable port.
fn flow_orders(
    alg: &FrobeniusAlgebra,
    t: &DiagramTerm,
    strands: &Strands,
    stable: &BTreeMap<Wire, StrandKey>,
) -> Vec<Vec<Wire>> {
    let levels = t.levels(alg);
    let top = levels.len() - 1;
    // adjacency: wire -> neighbors (via pass-through and box wiring)
    let mut adj: BTreeMap<Wire, Vec<Wire>> = BTreeMap::new();
    let mut connect = |a: Wire, b: Wire| {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    };
    for (l, (off, b)) in t.slices.iter().enumerate() {
        let bd = b.dom(alg).len();
        let bc = b.cod(alg).len();
        let below = levels[l].len();
        for p in 0..*off {
            connect(Wire { level: l, pos: p }, Wire { level: l + 1, pos: p });
        }
        for p in off + bd..below {
            connect(Wire { level: l, pos: p }, Wire { level: l + 1, pos: p - bd + bc });
        }
        for (pa, pb) in b.wiring() {
            connect(port_wire(l, *off, pa), port_wire(l, *off, pb));
        }
    }
    let oriented = wire_orientations(alg, t);
    let mut result = vec![Vec::new(); strands.n_strands];
    let mut seen: BTreeMap<Wire, bool> = BTreeMap::new();
    // flow starts: bottom boundary Up wires, top boundary Down wires, square
    // outputs/inputs where flow leaves the square.
    let mut starts: Vec<Wire> = Vec::new();
    for p in 0..levels[0].len() {
        let w = Wire { level: 0, pos: p };
        if oriented[&w] == Orient::Up {
            starts.push(w);
        }
    }
    for p in 0..levels[top].len() {
        let w = Wire { level: top, pos: p };
        if oriented[&w] == Orient::Down {
            starts.push(w);
        }
    }
    for (l, (off, b)) in t.slices.iter().enumerate() {
        match b {
            SqCup { .. } => {
                // flow leaves the square upward on the Up leg (cod 0) and the
                // Down leg (cod 1) flows INTO the square; the Down leg is its
                // own strand with flow start at its other end, found via
                // boundary/winding; treat the square's Down leg as a start
                // for walking in reverse order (flow ends there), so do not
                // add it.
                starts.push(Wire { level: l + 1, pos: *off });
            }
            SqCap { .. } => {
                // flow leaves the square downward on the Down leg (dom 0)
                starts.push(Wire { level: l, pos: *off });
            }
            _ => {}
        }
    }
    let walk = |start: Wire, seen: &mut BTreeMap<Wire, bool>| -> Vec<Wire> {
        let mut path = vec![start];
        seen.insert(start, true);
        let mut cur = start;
        loop {
            let next = adj
                .get(&cur)
                .into_iter()
                .flatten()
                .find(|w| !seen.get(w).copied().unwrap_or(false));
            match next {
                Some(&w) => {
                    seen.insert(w, true);
                    path.push(w);
                    cur = w;
                }
                None => break,
            }
        }
        path
    };
    for start in starts {
        if seen.get(&start).copied().unwrap_or(false) {
            continue;
        }
        let s = strands.wire_strand[&start];
        let path = walk(start, &mut seen);
        if result[s].is_empty() {
            result[s] = path;
        }
    }
    // closed loops and anything untouched: start at the wire carrying the
    // strand's smallest stable port (stable under interchange reordering)
    let mut open: Vec<Vec<(StrandKey, Wire)>> = vec![Vec::new(); strands.n_strands];
    for (w, s) in &strands.wire_strand {
        if result[*s].is_empty() && !seen.get(w).copied().unwrap_or(false) {
            if let Some(k) = stable.get(w) {
                open[*s].push((*k, *w));
            }
        }
    }
    for s in 0..strands.n_strands {
        if result[s].is_empty() {
            open[s].sort();
            let start = open[s]
                .first()
                .map(|(_, w)| *w)
                .unwrap_or_else(|| {
                    *strands
                        .wire_strand
                        .iter()
                        .find(|(_, si)| **si == s)
                        .map(|(w, _)| w)
                        .unwrap()
                });
            result[s] = walk(start, &mut seen);
        }
    }
    result
}

/// Runs: maximal crossing-free stretches of a strand's flow.
struct RunTable {
    /// run index per flow position
    run_of_flow: Vec<usize>,
    /// for each run the flow indices it covers
    runs: Vec<Vec<usize>>,
    wires: Vec<Wire>,
}

impl RunTable {
    fn run_of(&self, flow_idx: usize) -> usize {
        self.run_of_flow[flow_idx.min(self.run_of_flow.len().saturating_sub(1))]
    }
    fn n_runs(&self) -> usize {
        self.runs.len()
    }
    /// Dot anchor: top of the first up-oriented wire in the run (maximal
    /// level among the run's up wires reached without crossing); falls back
    /// to the run's first wire.
    fn dot_anchor(&self, run: usize, oriented: &BTreeMap<Wire, Orient>) -> Wire {
        let idxs = &self.runs[run];
        let mut best: Option<Wire> = None;
        for &i in idxs {
            let w = self.wires[i];
            if oriented[&w] == Orient::Up {
                best = Some(match best {
                    None => w,
                    Some(b) => {
                        if w.level > b.level {
                            w
                        } else {
                            b
                        }
                    }
                });
            }
        }
        best.unwrap_or(self.wires[idxs[0]])
    }
}

fn runs_of_strand(_alg: &FrobeniusAlgebra, t: &DiagramTerm, flow: &[Wire]) -> RunTable {
    // a crossing or square between consecutive flow wires breaks the run
    let crossings: Vec<(usize, &GenBox, usize)> = t
        .slices
        .iter()
        .enumerate()
        .map(|(l, (off, b))| (l, b, *off))
        .collect();
    let is_barrier_between = |a: Wire, b: Wire| -> bool {
        // consecutive flow wires connected through a box: find the box
        for (l, bx, off) in &crossings {
            let wiring = bx.wiring();
            for (pa, pb) in wiring {
                let wa = port_wire(*l, *off, pa);
                let wb = port_wire(*l, *off, pb);
                if (wa == a && wb == b) || (wa == b && wb == a) {
                    return matches!(
                        bx,
                        CrossUU { .. } | CrossDD { .. } | CrossT { .. } | CrossTP { .. }
                    );
                }
            }
        }
        false
    };
    let mut run_of_flow = Vec::with_capacity(flow.len());
    let mut runs: Vec<Vec<usize>> = Vec::new();
    let mut current = 0usize;
    for i in 0..flow.len() {
        if i == 0 {
            runs.push(vec![0]);
            run_of_flow.push(0);
            continue;
        }
        if is_barrier_between(flow[i - 1], flow[i]) {
            current += 1;
            runs.push(Vec::new());
        }
        runs[current].push(i);
        run_of_flow.push(current);
    }
    RunTable { run_of_flow, runs, wires: flow.to_vec() }
}

/// Interchange-canonical ordering of the skeleton: adjacent independent
/// boxes are swapped whenever the swap lexicographically lowers the pair
/// (offset first, then box shape). This converges to the unique
/// lexicographically least word of the trace monoid, i.e. a canonical
/// staircase with boxes as low and as left as the wiring allows.
fn sink_boxes(ctx: &DiagramContext, t: TaggedTerm) -> TaggedTerm {
    let alg = &ctx.algebra;
    let mut slices = t.slices.clone();
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..slices.len().saturating_sub(1) {
            let (off_a, box_a, tag_a) = slices[i].clone();
            let (off_b, box_b, tag_b) = slices[i + 1].clone();
            let a_in = box_a.dom(alg).len();
            let a_out = box_a.cod(alg).len();
            let b_in = box_b.dom(alg).len();
            let b_out = box_b.cod(alg).len();
            // B's input interval lives in A's codomain word; compare there.
            let (independent, new_b_off, new_a_off) = if off_b + b_in <= off_a {
                // B entirely left of A: after the swap A shifts by B's width change
                (true, off_b, off_a + b_out - b_in)
            } else if off_b >= off_a + a_out {
                // B entirely right of A: after the swap B's offset is measured
                // in A's domain word
                (true, off_b + a_in - a_out, off_a)
            } else {
                (false, 0, 0)
            };
            if independent {
                let before = ((off_a, box_a.clone()), (off_b, box_b.clone()));
                let after = ((new_b_off, box_b.clone()), (new_a_off, box_a.clone()));
                if after < before {
                    slices[i] = (new_b_off, box_b, tag_b);
                    slices[i + 1] = (new_a_off, box_a, tag_a);
                    changed = true;
                }
            }
        }
    }
    TaggedTerm { dom: t.dom, slices }
}

// ---------------------------------------------------------------------------
// Measure helpers, spanning-form check, saturation
// ---------------------------------------------------------------------------

fn geometry_of(ctx: &DiagramContext, t: &DiagramTerm) -> Geometry {
    let tagged = TaggedTerm {
        dom: t.dom.clone(),
        slices: t.slices.iter().cloned().enumerate().map(|(i, (o, b))| (o, b, i)).collect(),
    };
    Geometry::build(&ctx.algebra, &tagged)
}

/// Sum over dots of the number of crossing barriers after the dot's run in
/// flow order: zero exactly when every dot sits past the last crossing of
/// its strand. Strictly decreases when a dot slides up through a crossing.
pub fn dot_inversion_count(ctx: &DiagramContext, t: &DiagramTerm) -> i64 {
    let geo = geometry_of(ctx, t);
    let mut total = 0i64;
    for (l, (off, b)) in t.slices.iter().enumerate() {
        if let Dot { .. } = b {
            let w = Wire { level: l, pos: *off };
            let s = geo.strands.wire_strand[&w];
            let fi = geo.flow[s].iter().position(|x| *x == w).unwrap_or(0);
            let run = geo.runs[s].run_of(fi);
            let n_runs = geo.runs[s].n_runs();
            total += (n_runs - 1 - run) as i64;
        }
    }
    total
}

/// Sum over closed strands (loops) of the number of columns to their right
/// at their top level. Decreases as bubbles slide toward the right edge.
pub fn loop_right_count(ctx: &DiagramContext, t: &DiagramTerm) -> i64 {
    let alg = &ctx.algebra;
    let geo = geometry_of(ctx, t);
    let levels = t.levels(alg);
    let mut total = 0i64;
    for s in 0..geo.strands.n_strands {
        if !geo.strands.closed[s] {
            continue;
        }
        let top = geo.flow[s].iter().map(|w| (w.level, w.pos)).max().unwrap();
        total += (levels[top.0].len() - 1 - top.1) as i64;
    }
    total
}

/// Number of closed strands.
pub fn closed_loop_count(ctx: &DiagramContext, t: &DiagramTerm) -> usize {
    let geo = geometry_of(ctx, t);
    geo.strands.closed.iter().filter(|c| **c).count()
}

/// The five spanning-form conditions: pairwise single intersections, no
/// self-intersections, at most one cup or cap per strand, dots above all
/// crossings of their strand, no bubbles left in the plane.
pub fn spanning_form(ctx: &DiagramContext, t: &DiagramTerm) -> bool {
    let alg = &ctx.algebra;
    let geo = geometry_of(ctx, t);
    if geo.strands.closed.iter().any(|c| *c) {
        return false;
    }
    let mut pair_crossings: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    let mut cupcaps_per_strand: BTreeMap<usize, u32> = BTreeMap::new();
    for (l, (off, b)) in t.slices.iter().enumerate() {
        let lev = l;
        match b {
            CrossUU { .. } | CrossDD { .. } | CrossT { .. } | CrossTP { .. } => {
                let s1 = geo.strands.wire_strand[&Wire { level: lev, pos: *off }];
                let s2 = geo.strands.wire_strand[&Wire { level: lev, pos: off + 1 }];
                if s1 == s2 {
                    return false; // self-intersection
                }
                let key = (s1.min(s2), s1.max(s2));
                let e = pair_crossings.entry(key).or_insert(0);
                *e += 1;
                if *e > 1 {
                    return false;
                }
            }
            CupR { .. } | CupL { .. } | SqCup { .. } => {
                let s = geo.strands.wire_strand[&Wire { level: lev + 1, pos: *off }];
                let s2 = geo.strands.wire_strand[&Wire { level: lev + 1, pos: off + 1 }];
                for st in [s, s2] {
                    let e = cupcaps_per_strand.entry(st).or_insert(0);
                    *e += 1;
                    if *e > 2 {
                        return false;
                    }
                }
            }
            CapR { .. } | CapL { .. } | SqCap { .. } => {
                let s = geo.strands.wire_strand[&Wire { level: lev, pos: *off }];
                let s2 = geo.strands.wire_strand[&Wire { level: lev, pos: off + 1 }];
                for st in [s, s2] {
                    let e = cupcaps_per_strand.entry(st).or_insert(0);
                    *e += 1;
                    if *e > 2 {
                        return false;
                    }
                }
            }
            Dot { .. } => {
                let w = Wire { level: lev, pos: *off };
                let s = geo.strands.wire_strand[&w];
                let fi = geo.flow[s].iter().position(|x| *x == w).unwrap_or(0);
                let run = geo.runs[s].run_of(fi);
                if run + 1 != geo.runs[s].n_runs() {
                    return false; // a crossing above the dot on its strand
                }
            }
            _ => {}
        }
        let _ = alg;
    }
    // "at most one cup or cap per strand": each cup/cap was counted on both
    // legs, i.e. twice per strand when both legs belong to it; a strand with
    // one cup or cap accumulates 2 (cup/cap legs are one strand except for
    // squares, which break the strand).
    cupcaps_per_strand.values().all(|&v| v <= 2)
}

/// All basis-token saturations of a normalized term: every strand receives
/// exactly one basis token (strands without a token get the unit, colored
/// strands their idempotent), and in a colored context uncolored strands are
/// expanded over all colors. The returned list of (term, coefficient) sums
/// to a morphism equal to the input; two equal normal forms have identical
/// saturations, which makes the zero test exact for sums that differ only by
/// the unit decomposition 1 = sum_i e_i.
pub fn saturations(
    ctx: &DiagramContext,
    term: &DiagramTerm,
) -> Option<Vec<(DiagramTerm, Scalar)>> {
    let alg = &ctx.algebra;
    // color expansion first
    let base_terms: Vec<(DiagramTerm, Scalar)> = if ctx.colored {
        let geo = geometry_of(ctx, term);
        let uncolored: Vec<usize> =
            (0..geo.strands.n_strands).filter(|&s| geo.colors[s].is_none()).collect();
        if uncolored.is_empty() {
            vec![(term.clone(), one())]
        } else {
            let mut out = Vec::new();
            let n = alg.n_components();
            let mut assignment = vec![0usize; uncolored.len()];
            'variants: loop {
                if let Some(t) = recolor(ctx, term, &uncolored, &assignment) {
                    out.push((t, one()));
                }
                let mut i = 0;
                loop {
                    if i == assignment.len() {
                        break 'variants;
                    }
                    assignment[i] += 1;
                    if assignment[i] < n {
                        break;
                    }
                    assignment[i] = 0;
                    i += 1;
                }
            }
            out
        }
    } else {
        vec![(term.clone(), one())]
    };
    // token saturation: give every token-free strand the unit and expand all
    // tokens over the basis
    let mut result = Vec::new();
    for (t, c0) in base_terms {
        let t = match anchored_form(ctx, t) {
            Some(t) => t,
            None => continue,
        };
        let geo = geometry_of(ctx, &t);
        // find strands lacking a token
        let mut has_token: Vec<bool> = vec![false; geo.strands.n_strands];
        for (l, (off, b)) in t.slices.iter().enumerate() {
            if matches!(b, Tok { .. }) {
                let w = Wire { level: l, pos: *off };
                has_token[geo.strands.wire_strand[&w]] = true;
            }
        }
        // add a unit token on each token-free strand at its anchor
        let mut augmented = t.clone();
        let mut missing: Vec<usize> =
            (0..geo.strands.n_strands).filter(|&s| !has_token[s]).collect();
        missing.sort();
        if !missing.is_empty() {
            // insert unit tokens, then re-anchor (the anchored form drops
            // units, so instead we expand directly below)
            let mut items: Vec<(Wire, Orient, Option<Color>)> = Vec::new();
            for &s in &missing {
                let w = geo.token_anchor(s);
                items.push((w, geo.oriented[&w], geo.colors[s]));
            }
            items.sort();
            // expansion: for each missing strand, a choice of basis element
            // within its (projected) unit
            let mut choices: Vec<Vec<(usize, Scalar)>> = Vec::new();
            for (_, _, col) in &items {
                let unit = match col {
                    Some(i) => alg.idempotent_coords(*i).ok()?.clone(),
                    None => alg.unit_coords().clone(),
                };
                choices.push(
                    unit.iter()
                        .enumerate()
                        .filter(|(_, v)| *v != &zero())
                        .map(|(b, v)| (b, v.clone()))
                        .collect(),
                );
            }
            let mut idx = vec![0usize; items.len()];
            'outer: loop {
                let mut coeff = c0.clone();
                let mut ins: Vec<(Wire, GenBox)> = Vec::new();
                for (i, (w, orient, col)) in items.iter().enumerate() {
                    let (b, v) = &choices[i][idx[i]];
                    coeff = coeff * v;
                    ins.push((
                        *w,
                        Tok { coords: alg.basis_coords(*b), orient: *orient, color: *col },
                    ));
                }
                // build augmented term: insert before the raw slice index
                ins.sort_by_key(|(w, _)| (w.level, w.pos));
                let mut slices: Vec<(usize, GenBox)> = Vec::new();
                let mut ins_it = ins.into_iter().peekable();
                for (lvl, (off, b)) in augmented.slices.iter().enumerate() {
                    while let Some((w, _)) = ins_it.peek() {
                        if w.level <= lvl {
                            let (w, tb) = ins_it.next().unwrap();
                            slices.push((w.pos, tb));
                        } else {
                            break;
                        }
                    }
                    slices.push((*off, b.clone()));
                }
                for (w, tb) in ins_it {
                    slices.push((w.pos, tb));
                }
                let cand = DiagramTerm { dom: augmented.dom.clone(), slices };
                // expand existing general tokens over the basis too
                expand_tokens(ctx, &cand, &coeff, &mut result);
                // next index
                let mut i = 0;
                loop {
                    if i == idx.len() {
                        break 'outer;
                    }
                    idx[i] += 1;
                    if idx[i] < choices[i].len() {
                        break;
                    }
                    idx[i] = 0;
                    i += 1;
                }
            }
        } else {
            expand_tokens(ctx, &augmented, &c0, &mut result);
        }
        let _ = &mut augmented;
    }
    Some(result)
}

/// Expand every token box over the basis, producing scaled copies.
fn expand_tokens(
    ctx: &DiagramContext,
    t: &DiagramTerm,
    coeff: &Scalar,
    out: &mut Vec<(DiagramTerm, Scalar)>,
) {
    let tok_slices: Vec<usize> = t
        .slices
        .iter()
        .enumerate()
        .filter(|(_, (_, b))| matches!(b, Tok { .. }))
        .map(|(i, _)| i)
        .collect();
    let dim = ctx.algebra.dim();
    let mut stack: Vec<(usize, DiagramTerm, Scalar)> = vec![(0, t.clone(), coeff.clone())];
    while let Some((i, cur, c)) = stack.pop() {
        if i == tok_slices.len() {
            out.push((cur, c));
            continue;
        }
        let si = tok_slices[i];
        if let Tok { coords, orient, color } = &cur.slices[si].1 {
            for b in 0..dim {
                if coords[b] == zero() {
                    continue;
                }
                let mut nt = cur.clone();
                nt.slices[si].1 =
                    Tok { coords: ctx.algebra.basis_coords(b), orient: *orient, color: *color };
                stack.push((i + 1, nt, &c * &coords[b]));
            }
        }
    }
}

/// Repaint the given strands with chosen colors, rewriting every box leg
/// that sits on them, then re-canonicalize (propagation checks consistency).
fn recolor(
    ctx: &DiagramContext,
    term: &DiagramTerm,
    strands: &[usize],
    assignment: &[usize],
) -> Option<DiagramTerm> {
    let alg = &ctx.algebra;
    let geo = geometry_of(ctx, term);
    let choice: BTreeMap<usize, usize> =
        strands.iter().copied().zip(assignment.iter().copied()).collect();
    let color_at = |lev: usize, pos: usize, old: Option<Color>| -> Option<Color> {
        let s = geo.strands.wire_strand[&Wire { level: lev, pos }];
        choice.get(&s).copied().or(old)
    };
    let mut t = term.clone();
    for (p, letter) in t.dom.0.iter_mut().enumerate() {
        letter.color = color_at(0, p, letter.color);
    }
    let n = t.slices.len();
    for i in 0..n {
        let (off, b) = t.slices[i].clone();
        let lev = i;
        let nb = match b {
            Id(l) => Id(Letter { orient: l.orient, color: color_at(lev, off, l.color) }),
            Dot { power, orient, color } => {
                Dot { power, orient, color: color_at(lev, off, color) }
            }
            Tok { coords, orient, color } => {
                let c = color_at(lev, off, color);
                let coords = match c {
                    Some(i) => alg.project_coords(&coords, i),
                    None => coords,
                };
                Tok { coords, orient, color: c }
            }
            CrossUU { cl, cr } => CrossUU {
                cl: color_at(lev, off, cl),
                cr: color_at(lev, off + 1, cr),
            },
            CrossDD { cl, cr } => CrossDD {
                cl: color_at(lev, off, cl),
                cr: color_at(lev, off + 1, cr),
            },
            CrossT { cu, cd } => CrossT {
                cu: color_at(lev, off, cu),
                cd: color_at(lev, off + 1, cd),
            },
            CrossTP { cu, cd } => CrossTP {
                cd: color_at(lev, off, cd),
                cu: color_at(lev, off + 1, cu),
            },
            CupR { color } => CupR { color: color_at(lev + 1, off, color) },
            CapR { color } => CapR { color: color_at(lev, off, color) },
            CupL { color } => CupL { color: color_at(lev + 1, off, color) },
            CapL { color } => CapL { color: color_at(lev, off, color) },
            sq @ (SqCup { .. } | SqCap { .. }) => sq,
        };
        t.slices[i] = (off, nb);
    }
    canonicalize(ctx, t)
}

/// Pretty printer for diagnostics: one line per slice, bottom first.
pub fn fmt_term(alg: &FrobeniusAlgebra, t: &DiagramTerm) -> String {
    let mut out = String::new();
    out.push_str(&format!("[{}]", t.dom));
    for (off, b) in &t.slices {
        out.push_str(&format!(" ; {}@{}", fmt_box(alg, b), off));
    }
    out
}

pub fn fmt_box(alg: &FrobeniusAlgebra, b: &GenBox) -> String {
    let col = |c: &Option<Color>| match c {
        Some(i) => format!("@{}", i + 1),
        None => String::new(),
    };
    match b {
        Id(l) => format!("id({})", ObjectWord(vec![*l])),
        Dot { power, orient, color } => format!(
            "{}x^{}{}",
            if *orient == Orient::Down { "'" } else { "" },
            power,
            col(color)
        ),
        Tok { coords, orient, color } => format!(
            "{}tok({}){}",
            if *orient == Orient::Down { "'" } else { "" },
            alg.fmt_coords(coords),
            col(color)
        ),
        CrossUU { cl, cr } => format!("s{}{}", col(cl), col(cr)),
        CrossDD { cl, cr } => format!("sd{}{}", col(cl), col(cr)),
        CrossT { cu, cd } => format!("t{}{}", col(cu), col(cd)),
        CrossTP { cu, cd } => format!("t'{}{}", col(cu), col(cd)),
        CupR { color } => format!("c{}", col(color)),
        CapR { color } => format!("d{}", col(color)),
        CupL { color } => format!("c'{}", col(color)),
        CapL { color } => format!("d'{}", col(color)),
        SqCup { dots, token, .. } => format!("sq({},{})cup", dots, alg.label(*token)),
        SqCap { dots, token, .. } => format!("sq({},{})cap", dots, alg.label(*token)),
    }
}

pub fn fmt_expr(alg: &FrobeniusAlgebra, e: &MorphismExpr) -> String {
    if e.terms.is_empty() {
        return "0".into();
    }
    e.terms
        .iter()
        .map(|(t, c)| format!("({}) * {}", c.render(alg), fmt_term(alg, t)))
        .collect::<Vec<_>>()
        .join("  +  ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frobenius::{dual_numbers, ground_field, split_field};

    fn ctx_k() -> DiagramContext {
        DiagramContext::new(ground_field(), false)
    }

    fn up() -> Letter {
        Letter::up(None)
    }
    fn down() -> Letter {
        Letter::down(None)
    }

    #[test]
    fn boundaries_of_generators() {
        let ctx = ctx_k();
        let c = MorphismExpr::gen(&ctx, CupR { color: None });
        assert_eq!(c.dom, ObjectWord::empty());
        assert_eq!(c.cod, ObjectWord(vec![down(), up()]));
        let d = MorphismExpr::gen(&ctx, CapR { color: None });
        assert_eq!(d.dom, ObjectWord(vec![up(), down()]));
        assert_eq!(d.cod, ObjectWord::empty());
        let t = MorphismExpr::gen(&ctx, CrossT { cu: None, cd: None });
        assert_eq!(t.dom, ObjectWord(vec![up(), down()]));
        assert_eq!(t.cod, ObjectWord(vec![down(), up()]));
    }

    #[test]
    fn compose_identity() {
        let ctx = ctx_k();
        let id = MorphismExpr::identity(ObjectWord(vec![up()]));
        let r = compose(&ctx, &id, &id).unwrap();
        assert_eq!(r, id);
    }

    #[test]
    fn compose_boundary_mismatch() {
        let ctx = ctx_k();
        let c = MorphismExpr::gen(&ctx, CupR { color: None }); // 1 -> -+
        let d = MorphismExpr::gen(&ctx, CapR { color: None }); // +- -> 1
        let err = compose(&ctx, &d, &c).unwrap_err();
        assert!(matches!(err, DiagramError::BoundaryMismatch(..)));
    }

    #[test]
    fn interchange_normal_form() {
        // (a tensor 1) o (1 tensor b) == (1 tensor b) o (a tensor 1) == a tensor b
        let ctx = DiagramContext::new(dual_numbers(), false);
        let x = MorphismExpr::gen(
            &ctx,
            Dot { power: 1, orient: Orient::Up, color: None },
        );
        let tok = MorphismExpr::gen(
            &ctx,
            Tok { coords: ctx.algebra.basis_coords(1), orient: Orient::Up, color: None },
        );
        let idw = MorphismExpr::identity(ObjectWord(vec![up()]));
        let a = tensor(&ctx, &x, &idw).unwrap();
        let b = tensor(&ctx, &idw, &tok).unwrap();
        let ab = compose(&ctx, &b, &a).unwrap();
        let ba = compose(&ctx, &a, &b).unwrap();
        let direct = tensor(&ctx, &x, &tok).unwrap();
        assert_eq!(ab, ba);
        assert_eq!(ab, direct);
    }

    #[test]
    fn tokens_merge_and_units_vanish_on_anchoring() {
        let ctx = DiagramContext::new(dual_numbers(), false);
        let x_tok = MorphismExpr::gen(
            &ctx,
            Tok { coords: ctx.algebra.basis_coords(1), orient: Orient::Up, color: None },
        );
        // composition itself is syntactic: two stacked tokens, one term
        let sq = compose(&ctx, &x_tok, &x_tok).unwrap();
        assert_eq!(sq.n_terms(), 1);
        let t = sq.terms.keys().next().unwrap().clone();
        // anchoring merges: x * x = 0 in k[x]/(x^2)
        assert_eq!(anchored_form(&ctx, t), None);
        // unit token disappears under anchoring
        let unit_tok = MorphismExpr::gen(
            &ctx,
            Tok { coords: ctx.algebra.unit_coords().clone(), orient: Orient::Up, color: None },
        );
        let r = compose(&ctx, &unit_tok, &x_tok).unwrap();
        let t = r.terms.keys().next().unwrap().clone();
        let anchored = anchored_form(&ctx, t).unwrap();
        let expected = x_tok.terms.keys().next().unwrap().clone();
        assert_eq!(anchored, expected);
    }

    #[test]
    fn token_slides_through_crossing_to_anchor() {
        // (tok on top-left) o s == s o (tok bottom-right): tokens anchor at
        // the strand flow start, so both give the same canonical term.
        let ctx = DiagramContext::new(dual_numbers(), false);
        let s = MorphismExpr::gen(&ctx, CrossUU { cl: None, cr: None });
        let tokx = MorphismExpr::gen(
            &ctx,
            Tok { coords: ctx.algebra.basis_coords(1), orient: Orient::Up, color: None },
        );
        let idw = MorphismExpr::identity(ObjectWord(vec![up()]));
        let above_left = compose(&ctx, &tensor(&ctx, &tokx, &idw).unwrap(), &s).unwrap();
        let below_right = compose(&ctx, &s, &tensor(&ctx, &idw, &tokx).unwrap()).unwrap();
        let a = anchored_form(&ctx, above_left.terms.keys().next().unwrap().clone()).unwrap();
        let b = anchored_form(&ctx, below_right.terms.keys().next().unwrap().clone()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn color_mismatch_gives_zero() {
        let ctx = DiagramContext::new(split_field(2), true);
        let e1 = ctx.algebra.idempotent_coords(0).unwrap().clone();
        let e2 = ctx.algebra.idempotent_coords(1).unwrap().clone();
        let t1 = MorphismExpr::gen(&ctx, Tok { coords: e1, orient: Orient::Up, color: Some(0) });
        let t2 = MorphismExpr::gen(&ctx, Tok { coords: e2, orient: Orient::Up, color: Some(1) });
        let r = compose(&ctx, &t1, &t2).unwrap();
        assert!(r.is_zero());
        // same color composes; anchoring merges to the idempotent token,
        // which is the colored identity and vanishes
        let r2 = compose(&ctx, &t1.clone(), &t1).unwrap();
        let t = r2.terms.keys().next().unwrap().clone();
        let anchored = anchored_form(&ctx, t).unwrap();
        assert_eq!(anchored, DiagramTerm::identity(ObjectWord(vec![Letter::up(Some(0))])));
    }

    #[test]
    fn scalar_linearity() {
        let ctx = ctx_k();
        let id = MorphismExpr::identity(ObjectWord(vec![up()]));
        let two = id.scale(&crate::scalar::int(2));
        let sum = id.add(&id).unwrap();
        assert_eq!(two, sum);
        let diff = sum.sub(&two).unwrap();
        assert!(diff.is_zero());
    }
}
