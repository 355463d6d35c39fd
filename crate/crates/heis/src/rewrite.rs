//! Oriented rewriting of morphism expressions under a presentation's rules.
//!
//! Rules carry a name, a provenance string naming the relation they encode,
//! and human-readable pattern/replacement descriptions; matching itself is
//! compiled. The engine applies rules innermost-leftmost (lowest anchor slice
//! first, rules in priority order) until no rule applies or the step budget
//! runs out. Every applied step is checked against the termination measure
//!   (crossings, squares, cups/caps, same-orientation crossings,
//!    dot inversions, loops-left-of-strands, non-canonical crossing regions,
//!    decoration displacement)
//! compared lexicographically; this refines the (crossing, cup/cap,
//! dot-inversion, token-height) measure with tie-breaking components.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::bubbles::BubblePoly;
use crate::diagram::{
    anchored_form, closed_loop_count, compose, dot_inversion_count, fmt_expr,
    loop_right_count, saturations, spanning_form, tensor, DiagramContext, DiagramTerm,
    GenBox, MorphismExpr, ObjectWord,
};
use crate::frobenius::FrobeniusAlgebra;
use crate::scalar::Scalar;

/// Ambient data rules need: the diagram context plus the central charge.
#[derive(Clone)]
pub struct RuleCtx {
    pub dctx: DiagramContext,
    pub k: i64,
}

impl RuleCtx {
    pub fn new(algebra: FrobeniusAlgebra, colored: bool, k: i64) -> Self {
        RuleCtx { dctx: DiagramContext::new(algebra, colored), k }
    }
    pub fn alg(&self) -> &FrobeniusAlgebra {
        &self.dctx.algebra
    }
}

type ApplyFn = Arc<dyn Fn(&RuleCtx, &DiagramTerm, usize) -> Option<MorphismExpr> + Send + Sync>;

/// One oriented rewrite rule.
#[derive(Clone)]
pub struct RewriteRule {
    pub name: String,
    pub provenance: String,
    pub pattern: String,
    pub replacement: String,
    apply: ApplyFn,
}

impl std::fmt::Debug for RewriteRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "rule {} [{}]", self.name, self.provenance)
    }
}

impl RewriteRule {
    pub fn new(
        name: &str,
        provenance: &str,
        pattern: &str,
        replacement: &str,
        apply: impl Fn(&RuleCtx, &DiagramTerm, usize) -> Option<MorphismExpr> + Send + Sync + 'static,
    ) -> Self {
        RewriteRule {
            name: name.into(),
            provenance: provenance.into(),
            pattern: pattern.into(),
            replacement: replacement.into(),
            apply: Arc::new(apply),
        }
    }

    /// Try the rule anchored at slice `anchor` of `term`.
    pub fn apply_at(
        &self,
        rctx: &RuleCtx,
        term: &DiagramTerm,
        anchor: usize,
    ) -> Option<MorphismExpr> {
        (self.apply)(rctx, term, anchor)
    }
}

/// A named defining (or derived) relation, used both for self-checks and for
/// functor verification.
#[derive(Clone)]
pub struct Relation {
    pub name: String,
    pub provenance: String,
    pub lhs: MorphismExpr,
    pub rhs: MorphismExpr,
}

/// An ordered rule list for one presentation.
#[derive(Clone)]
pub struct RuleSet {
    pub name: String,
    pub rules: Vec<RewriteRule>,
    /// the presentation's defining relations (checked by the self-test)
    pub relations: Vec<Relation>,
    pub measure_description: String,
}

impl RuleSet {
    /// Text serialization for auditing: name, pattern, replacement, provenance.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# ruleset {}", self.name);
        let _ = writeln!(out, "# measure: {}", self.measure_description);
        for r in &self.rules {
            let _ = writeln!(
                out,
                "rule {}\n  pattern     {}\n  replacement {}\n  provenance  {}",
                r.name, r.pattern, r.replacement, r.provenance
            );
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Measure
// ---------------------------------------------------------------------------

pub type Measure = [i64; 8];

pub fn measure(rctx: &RuleCtx, t: &DiagramTerm) -> Measure {
    let (crossings, squares, cupcaps, same) = t.measure_counts();
    let dot_inv = dot_inversion_count(&rctx.dctx, t);
    let loops = loop_right_count(&rctx.dctx, t) + 16 * closed_loop_count(&rctx.dctx, t) as i64;
    let regions = noncanonical_region_count(rctx, t);
    let displaced =
        if anchored_form(&rctx.dctx, t.clone()) == Some(t.clone()) { 0 } else { 1 };
    [
        crossings as i64,
        squares as i64,
        cupcaps as i64,
        same as i64,
        dot_inv,
        loops,
        regions,
        displaced,
    ]
}

// ---------------------------------------------------------------------------
// Wire walking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attach {
    /// (slice index, port index within the box boundary)
    BoxPort(usize, usize),
    Boundary(usize),
}

/// Follow the wire at `(level, col)` upward to the next box or the codomain.
pub fn follow_up(alg: &FrobeniusAlgebra, t: &DiagramTerm, level: usize, col: usize) -> Attach {
    let mut c = col;
    for (j, (off, b)) in t.slices.iter().enumerate().skip(level) {
        let din = b.dom(alg).len();
        let dout = b.cod(alg).len();
        if c >= *off && c < off + din {
            return Attach::BoxPort(j, c - off);
        }
        if c >= off + din {
            c = c + dout - din;
        }
    }
    Attach::Boundary(c)
}

/// Follow the wire at `(level, col)` downward to the next box or the domain.
pub fn follow_down(alg: &FrobeniusAlgebra, t: &DiagramTerm, level: usize, col: usize) -> Attach {
    let mut c = col;
    for j in (0..level).rev() {
        let (off, b) = &t.slices[j];
        let din = b.dom(alg).len();
        let dout = b.cod(alg).len();
        if c >= *off && c < off + dout {
            return Attach::BoxPort(j, c - off);
        }
        if c >= off + dout {
            c = c + din - dout;
        }
    }
    Attach::Boundary(c)
}

// ---------------------------------------------------------------------------
// Cluster extraction and window rewriting
// ---------------------------------------------------------------------------

struct WireIds {
    in_ids: Vec<Vec<u64>>,
    out_ids: Vec<Vec<u64>>,
    dom_ids: Vec<u64>,
}

fn wire_ids(alg: &FrobeniusAlgebra, t: &DiagramTerm) -> WireIds {
    let mut next = 0u64;
    let mut fresh = || {
        next += 1;
        next
    };
    let dom_ids: Vec<u64> = (0..t.dom.len()).map(|_| fresh()).collect();
    let mut frontier = dom_ids.clone();
    let mut in_ids = Vec::new();
    let mut out_ids = Vec::new();
    for (off, b) in &t.slices {
        let din = b.dom(alg).len();
        let dout = b.cod(alg).len();
        let ins: Vec<u64> = frontier[*off..off + din].to_vec();
        let outs: Vec<u64> = (0..dout).map(|_| fresh()).collect();
        frontier.splice(*off..off + din, outs.iter().copied());
        in_ids.push(ins);
        out_ids.push(outs);
    }
    WireIds { in_ids, out_ids, dom_ids }
}

/// Re-render the same wiring in a different topological order of the boxes.
fn reorder(alg: &FrobeniusAlgebra, t: &DiagramTerm, order: &[usize]) -> Option<DiagramTerm> {
    let ids = wire_ids(alg, t);
    let mut frontier: Vec<u64> = ids.dom_ids.clone();
    let mut slices = Vec::with_capacity(order.len());
    for &i in order {
        let ins = &ids.in_ids[i];
        let din = ins.len();
        let off = if din == 0 {
            nullary_position(alg, t, i, &ids, &frontier)?
        } else {
            frontier.windows(din).position(|w| w == &ins[..])?
        };
        frontier.splice(off..off + din, ids.out_ids[i].iter().copied());
        slices.push((off, t.slices[i].1.clone()));
    }
    Some(DiagramTerm { dom: t.dom.clone(), slices })
}

/// Where to place a box with no inputs (a cup) in a new rendering: directly
/// after the last wire that was to its left in the original rendering.
fn nullary_position(
    alg: &FrobeniusAlgebra,
    t: &DiagramTerm,
    i: usize,
    ids: &WireIds,
    frontier: &[u64],
) -> Option<usize> {
    let mut left: BTreeSet<u64> = BTreeSet::new();
    let mut cur: Vec<u64> = ids.dom_ids.clone();
    for (j, (off, b)) in t.slices.iter().enumerate() {
        if j == i {
            for w in &cur[..*off] {
                left.insert(*w);
            }
            break;
        }
        let din = b.dom(alg).len();
        cur.splice(*off..off + din, ids.out_ids[j].iter().copied());
    }
    let mut pos = 0usize;
    for (idx, w) in frontier.iter().enumerate() {
        if left.contains(w) {
            pos = idx + 1;
        }
    }
    Some(pos)
}

/// Reorder so the `cluster` slices become consecutive (keeping their internal
/// order); returns the reordered term and the first level of the cluster.
/// Fails when a non-cluster box is wired both below and above the cluster.
pub fn make_consecutive(
    alg: &FrobeniusAlgebra,
    t: &DiagramTerm,
    cluster: &[usize],
) -> Option<(DiagramTerm, usize)> {
    let n = t.slices.len();
    let cl: BTreeSet<usize> = cluster.iter().copied().collect();
    let ids = wire_ids(alg, t);
    let mut feeds = vec![BTreeSet::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && ids.out_ids[i].iter().any(|w| ids.in_ids[j].contains(w)) {
                feeds[i].insert(j);
            }
        }
    }
    let mut reach = feeds.clone();
    loop {
        let mut changed = false;
        for i in 0..n {
            let mut add = Vec::new();
            for &j in reach[i].iter() {
                for &k in reach[j].iter() {
                    if !reach[i].contains(&k) {
                        add.push(k);
                    }
                }
            }
            if !add.is_empty() {
                changed = true;
                reach[i].extend(add);
            }
        }
        if !changed {
            break;
        }
    }
    let feeds_cluster = |i: usize| cl.iter().any(|&c| reach[i].contains(&c));
    let fed_by_cluster = |i: usize| cl.iter().any(|&c| reach[c].contains(&i));
    let first_cl = *cluster.iter().min()?;
    let mut low = Vec::new();
    let mut high = Vec::new();
    for i in 0..n {
        if cl.contains(&i) {
            continue;
        }
        let f = feeds_cluster(i);
        let g = fed_by_cluster(i);
        if f && g {
            return None;
        }
        if f || (!g && i < first_cl) {
            low.push(i);
        } else {
            high.push(i);
        }
    }
    let mut order = low.clone();
    let mut sorted_cluster = cluster.to_vec();
    sorted_cluster.sort();
    order.extend(sorted_cluster);
    order.extend(high);
    let first = low.len();
    let t2 = reorder(alg, t, &order)?;
    Some((t2, first))
}

/// Replace the window of `len` consecutive slices starting at `first`, whose
/// boxes span columns `[c0, c0+w_in)` of the word at level `first`, by
/// `patch` (mapping that sub-word to the window's sub-codomain).
pub fn splice_window(
    rctx: &RuleCtx,
    t: &DiagramTerm,
    first: usize,
    len: usize,
    c0: usize,
    w_in: usize,
    patch: &MorphismExpr,
) -> Option<MorphismExpr> {
    let ctx = &rctx.dctx;
    let alg = rctx.alg();
    let levels = t.levels(alg);
    let bottom_word = &levels[first];
    let mut hi = c0 + w_in;
    for j in first..first + len {
        let (off, b) = &t.slices[j];
        let din = b.dom(alg).len();
        let dout = b.cod(alg).len();
        if *off < c0 || off + din > hi {
            return None;
        }
        hi = hi + dout - din;
    }
    if patch.dom.len() != w_in || patch.cod.len() != hi - c0 {
        return None;
    }
    let top_word = &levels[first + len];
    let left = MorphismExpr::identity(ObjectWord(bottom_word.0[..c0].to_vec()));
    let right = MorphismExpr::identity(ObjectWord(bottom_word.0[c0 + w_in..].to_vec()));
    let middle = tensor(ctx, &tensor(ctx, &left, patch).ok()?, &right).ok()?;
    let lower = MorphismExpr::from_term(
        ctx,
        DiagramTerm { dom: t.dom.clone(), slices: t.slices[..first].to_vec() },
    );
    let upper = MorphismExpr::from_term(
        ctx,
        DiagramTerm { dom: top_word.clone(), slices: t.slices[first + len..].to_vec() },
    );
    let out = compose(ctx, &middle, &lower).ok()?;
    compose(ctx, &upper, &out).ok()
}

/// Rewrite a strand-local cluster of slices with `patch`. The cluster's
/// boxes must form one column-contiguous window after consecutivization.
pub fn rewrite_cluster(
    rctx: &RuleCtx,
    t: &DiagramTerm,
    cluster: &[usize],
    patch: &MorphismExpr,
) -> Option<MorphismExpr> {
    let alg = rctx.alg();
    let mut sorted = cluster.to_vec();
    sorted.sort();
    let (t2, first) = make_consecutive(alg, t, &sorted)?;
    let len = sorted.len();
    // hull at the bottom level: track columns down through the window
    let mut lo = usize::MAX;
    let mut hi_top = 0usize;
    {
        // walk from bottom: at each window slice the box occupies columns at
        // its own level; translate to bottom-level columns via the running
        // shift caused by lower window boxes entirely left of it
        let mut events: Vec<(usize, usize, i64)> = Vec::new(); // (col, width, shift after)
        let mut shift_map: Vec<(usize, i64)> = Vec::new(); // (boundary col at bottom, shift)
        let _ = (&events, &shift_map);
        // simple approach: the window's columns at the bottom are the union
        // of each box's dom interval translated by the inverse of the width
        // changes of lower window boxes strictly to its left.
        let mut lower_boxes: Vec<(usize, usize, usize)> = Vec::new(); // (off, din, dout) in own level coords
        for j in first..first + len {
            let (off, b) = &t2.slices[j];
            let din = b.dom(alg).len();
            let dout = b.cod(alg).len();
            // translate off to bottom coords
            let mut col = *off as i64;
            for (o2, d2, c2) in lower_boxes.iter().rev() {
                let delta = *c2 as i64 - *d2 as i64;
                if (*o2 as i64) + (*c2 as i64) <= col {
                    col -= delta;
                }
            }
            let col = col.max(0) as usize;
            if col < lo {
                lo = col;
            }
            if col + din.max(1) > hi_top {
                hi_top = col + din;
            }
            lower_boxes.push((*off, din, dout));
        }
        if lo == usize::MAX {
            lo = 0;
        }
    }
    let w_in = hi_top.saturating_sub(lo);
    splice_window(rctx, &t2, first, len, lo, w_in, patch)
}

// ---------------------------------------------------------------------------
// Crossing regions (braid/double-crossing canonicalization)
// ---------------------------------------------------------------------------

/// A maximal group of same-kind crossings connected by bare wires, plus the
/// permutation it realizes and whether it is rendered canonically.
pub struct Region {
    pub slices: Vec<usize>,
    pub lo: usize,
    pub width: usize,
    pub perm: Vec<usize>,
    pub canonical: bool,
    pub down: bool,
}

pub fn crossing_regions(rctx: &RuleCtx, t: &DiagramTerm) -> Vec<Region> {
    let alg = rctx.alg();
    let n = t.slices.len();
    let mut out = Vec::new();
    for kind in [0u8, 1u8] {
        let member = |b: &GenBox| {
            if kind == 0 {
                matches!(b, GenBox::CrossUU { .. })
            } else {
                matches!(b, GenBox::CrossDD { .. })
            }
        };
        let idx: Vec<usize> = (0..n).filter(|&i| member(&t.slices[i].1)).collect();
        if idx.is_empty() {
            continue;
        }
        let mut parent: BTreeMap<usize, usize> = idx.iter().map(|&i| (i, i)).collect();
        fn find(p: &mut BTreeMap<usize, usize>, mut x: usize) -> usize {
            while p[&x] != x {
                let g = p[&p[&x]];
                p.insert(x, g);
                x = g;
            }
            x
        }
        for &i in &idx {
            let (off, _) = t.slices[i];
            for p in 0..2usize {
                if let Attach::BoxPort(j, _) = follow_up(alg, t, i + 1, off + p) {
                    if member(&t.slices[j].1) {
                        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                        if ri != rj {
                            parent.insert(ri, rj);
                        }
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in &idx {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        for (_, slices) in groups {
            if let Some(region) = analyse_region(rctx, t, &slices, kind == 1) {
                out.push(region);
            }
        }
    }
    out
}

fn analyse_region(
    rctx: &RuleCtx,
    t: &DiagramTerm,
    slices: &[usize],
    down: bool,
) -> Option<Region> {
    let alg = rctx.alg();
    let (t2, first) = make_consecutive(alg, t, slices)?;
    let len = slices.len();
    let lo = (first..first + len).map(|j| t2.slices[j].0).min()?;
    let hi = (first..first + len).map(|j| t2.slices[j].0 + 2).max()?;
    let w = hi - lo;
    let mut rendered: Vec<usize> = Vec::new();
    let mut pi: Vec<usize> = (0..w).collect();
    for j in first..first + len {
        let off = t2.slices[j].0 - lo;
        rendered.push(off);
        // composing s_off on top: swap the VALUES off, off+1
        for v in pi.iter_mut() {
            if *v == off {
                *v = off + 1;
            } else if *v == off + 1 {
                *v = off;
            }
        }
    }
    let canon = canonical_word(&pi);
    let canonical = canon == rendered;
    Some(Region { slices: slices.to_vec(), lo, width: w, perm: pi, canonical, down })
}

/// Canonical reduced word for a permutation, bottom to top: repeatedly strip
/// the smallest top descent. Deterministic and reduced.
pub fn canonical_word(perm: &[usize]) -> Vec<usize> {
    let m = perm.len();
    let mut sigma = perm.to_vec();
    let mut word_top_down = Vec::new();
    loop {
        let mut inv = vec![0usize; m];
        for (p, &o) in sigma.iter().enumerate() {
            inv[o] = p;
        }
        match (0..m.saturating_sub(1)).find(|&j| inv[j] > inv[j + 1]) {
            None => break,
            Some(j) => {
                word_top_down.push(j);
                for v in sigma.iter_mut() {
                    if *v == j {
                        *v = j + 1;
                    } else if *v == j + 1 {
                        *v = j;
                    }
                }
            }
        }
    }
    word_top_down.reverse();
    word_top_down
}

pub fn noncanonical_region_count(rctx: &RuleCtx, t: &DiagramTerm) -> i64 {
    crossing_regions(rctx, t).iter().filter(|r| !r.canonical).count() as i64
}

// ---------------------------------------------------------------------------
// Generic rules
// ---------------------------------------------------------------------------

/// Slide all tokens to their strand anchors (merging, dropping units), float
/// dots within their runs, merge dot powers. One sound normalization step.
pub fn rule_decoration_normalize() -> RewriteRule {
    RewriteRule::new(
        "decoration-normalize",
        "token slide and merge relations; dot-token commutation; pivotal rotation moves",
        "tokens/dots off their canonical anchors",
        "the same diagram with decorations anchored and merged",
        |rctx, term, anchor| {
            if anchor != 0 {
                return None;
            }
            match anchored_form(&rctx.dctx, term.clone()) {
                None => {
                    Some(MorphismExpr::zero(term.dom.clone(), term.cod(rctx.alg())))
                }
                Some(t) => {
                    if &t == term {
                        None
                    } else {
                        Some(MorphismExpr::from_term(&rctx.dctx, t))
                    }
                }
            }
        },
    )
}

/// Re-render every non-canonical same-orientation crossing region with the
/// canonical reduced word of its permutation.
pub fn rule_region_sort() -> RewriteRule {
    RewriteRule::new(
        "crossing-region-sort",
        "braid relation and double-crossing cancellation",
        "a same-orientation crossing network off canonical form",
        "the canonical reduced word of its permutation",
        |rctx, term, anchor| {
            if anchor != 0 {
                return None;
            }
            let regions = crossing_regions(rctx, term);
            let region = regions.into_iter().find(|r| !r.canonical)?;
            let alg = rctx.alg();
            let (t2, first) = make_consecutive(alg, term, &region.slices)?;
            let len = region.slices.len();
            let levels = t2.levels(alg);
            let word = ObjectWord(
                levels[first].0[region.lo..region.lo + region.width].to_vec(),
            );
            let canon = canonical_word(&region.perm);
            let mut slices = Vec::new();
            let mut cur = word.clone();
            for j in canon {
                let (a, b) = (cur.0[j], cur.0[j + 1]);
                let bx = if region.down {
                    GenBox::CrossDD { cl: a.color, cr: b.color }
                } else {
                    GenBox::CrossUU { cl: a.color, cr: b.color }
                };
                slices.push((j, bx));
                cur.0.swap(j, j + 1);
            }
            let patch =
                MorphismExpr::from_term(&rctx.dctx, DiagramTerm { dom: word, slices });
            splice_window(rctx, &t2, first, len, region.lo, region.width, &patch)
        },
    )
}

// ---------------------------------------------------------------------------
// Normalization and equality
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Zero,
    NonzeroNormalForm,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub expr: MorphismExpr,
    pub steps: u64,
    pub exhausted: bool,
    pub spanning: bool,
    /// true when every applied step strictly decreased the measure
    pub measure_monotone: bool,
}

/// Apply `rule` once at the given position (term index in canonical order,
/// anchor slice). `None` signals no match; this is not an error state.
pub fn apply_rule_once(
    rctx: &RuleCtx,
    expr: &MorphismExpr,
    rule: &RewriteRule,
    term_index: usize,
    anchor: usize,
) -> Option<MorphismExpr> {
    let (term, coeff) = expr.terms.iter().nth(term_index)?;
    let replacement = rule.apply_at(rctx, term, anchor)?;
    let mut out = MorphismExpr::zero(expr.dom.clone(), expr.cod.clone());
    for (t, c) in &expr.terms {
        if t != term {
            out.add_term(t.clone(), c.clone());
        }
    }
    for (t, c) in &replacement.terms {
        out.add_term(t.clone(), coeff.mul(c));
    }
    Some(out)
}

/// Normalize under the rule set with a step budget.
pub fn normalize(rctx: &RuleCtx, expr: &MorphismExpr, rules: &RuleSet, budget: u64) -> Normalized {
    let mut steps = 0u64;
    let mut exhausted = false;
    let mut measure_monotone = true;
    let mut work: BTreeMap<DiagramTerm, BubblePoly> = expr.terms.clone();
    let mut done: BTreeMap<DiagramTerm, BubblePoly> = BTreeMap::new();
    let mut known_normal: BTreeSet<DiagramTerm> = BTreeSet::new();
    'outer: while let Some((term, coeff)) = work.pop_first() {
        if coeff.is_zero() {
            continue;
        }
        if known_normal.contains(&term) {
            merge(&mut done, term, coeff);
            continue;
        }
        if steps >= budget {
            exhausted = true;
            merge(&mut done, term, coeff);
            continue;
        }
        let m0 = measure(rctx, &term);
        for anchor in 0..=term.slices.len() {
            for rule in &rules.rules {
                if let Some(repl) = rule.apply_at(rctx, &term, anchor) {
                    steps += 1;
                    for (t2, c2) in &repl.terms {
                        if measure(rctx, t2) >= m0 {
                            measure_monotone = false;
                        }
                        let c = coeff.mul(c2);
                        if known_normal.contains(t2) {
                            merge(&mut done, t2.clone(), c);
                        } else {
                            merge(&mut work, t2.clone(), c);
                        }
                    }
                    continue 'outer;
                }
            }
        }
        known_normal.insert(term.clone());
        merge(&mut done, term, coeff);
    }
    let mut out = MorphismExpr::zero(expr.dom.clone(), expr.cod.clone());
    for (t, c) in done {
        out.add_term(t, c);
    }
    let spanning = out.terms.keys().all(|t| spanning_form(&rctx.dctx, t));
    Normalized { expr: out, steps, exhausted, spanning, measure_monotone }
}

fn merge(map: &mut BTreeMap<DiagramTerm, BubblePoly>, t: DiagramTerm, c: BubblePoly) {
    if c.is_zero() {
        return;
    }
    let e = map.entry(t.clone()).or_insert_with(BubblePoly::zero);
    e.add_assign(&c);
    if e.is_zero() {
        map.remove(&t);
    }
}

/// Zero test modulo the unit decomposition: saturate every normal term with
/// basis tokens and collect.
pub fn saturated_is_zero(rctx: &RuleCtx, expr: &MorphismExpr) -> bool {
    let mut acc: BTreeMap<DiagramTerm, BubblePoly> = BTreeMap::new();
    for (t, c) in &expr.terms {
        if let Some(list) = saturations(&rctx.dctx, t) {
            for (t2, s) in list {
                merge(&mut acc, t2, c.scale(&s));
            }
        }
    }
    acc.is_empty()
}

/// Normalize and decide whether the expression is zero.
pub fn equal_zero(
    rctx: &RuleCtx,
    expr: &MorphismExpr,
    rules: &RuleSet,
    budget: u64,
) -> (Verdict, Normalized) {
    let n = normalize(rctx, expr, rules, budget);
    if saturated_is_zero(rctx, &n.expr) {
        return (Verdict::Zero, n);
    }
    if n.exhausted {
        (Verdict::Unknown, n)
    } else {
        (Verdict::NonzeroNormalForm, n)
    }
}

/// Check lhs = rhs; the detail string reports the steps or the residual.
pub fn check_equal(
    rctx: &RuleCtx,
    lhs: &MorphismExpr,
    rhs: &MorphismExpr,
    rules: &RuleSet,
    budget: u64,
) -> (Verdict, String) {
    let diff = match lhs.sub(rhs) {
        Ok(d) => d,
        Err(e) => return (Verdict::NonzeroNormalForm, format!("boundary mismatch: {}", e)),
    };
    let (v, n) = equal_zero(rctx, &diff, rules, budget);
    let detail = match v {
        Verdict::Zero => format!("zero after {} steps", n.steps),
        Verdict::NonzeroNormalForm => format!(
            "nonzero normal form after {} steps: {}",
            n.steps,
            fmt_expr(rctx.alg(), &n.expr)
        ),
        Verdict::Unknown => format!("budget exhausted after {} steps", n.steps),
    };
    (v, detail)
}

/// Scalar morphisms: an endomorphism of the unit equal to lambda * id_1.
pub fn scalar_value(expr: &MorphismExpr) -> Option<Scalar> {
    if !expr.dom.is_empty() || !expr.cod.is_empty() {
        return None;
    }
    if expr.terms.is_empty() {
        return Some(crate::scalar::zero());
    }
    if expr.terms.len() == 1 {
        let (t, c) = expr.terms.iter().next().unwrap();
        if t.slices.is_empty() {
            return c.as_scalar();
        }
    }
    None
}

/// Convenience: context-aware generator expression.
pub fn gen_expr(rctx: &RuleCtx, b: GenBox) -> MorphismExpr {
    MorphismExpr::gen(&rctx.dctx, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{GenBox::*, Letter, Orient};
    use crate::frobenius::{dual_numbers, ground_field, split_field};

    fn up() -> Letter {
        Letter::up(None)
    }

    fn plain_rules() -> RuleSet {
        RuleSet {
            name: "test".into(),
            rules: vec![rule_decoration_normalize(), rule_region_sort()],
            relations: vec![],
            measure_description: String::new(),
        }
    }

    #[test]
    fn region_sort_canonicalizes_braid_and_double_crossings() {
        let rc = RuleCtx::new(dual_numbers(), false, 0);
        let ctx = &rc.dctx;
        let s = MorphismExpr::gen(ctx, CrossUU { cl: None, cr: None });
        let id1 = MorphismExpr::identity(ObjectWord(vec![up()]));
        let s0 = tensor(ctx, &s, &id1).unwrap();
        let s1 = tensor(ctx, &id1, &s).unwrap();
        let lhs = compose(ctx, &s0, &compose(ctx, &s1, &s0).unwrap()).unwrap();
        let rhs = compose(ctx, &s1, &compose(ctx, &s0, &s1).unwrap()).unwrap();
        let rules = plain_rules();
        let nl = normalize(&rc, &lhs, &rules, 100);
        let nr = normalize(&rc, &rhs, &rules, 100);
        assert_eq!(nl.expr, nr.expr);
        assert!(nl.measure_monotone && nr.measure_monotone);
        let ss = compose(ctx, &s, &s).unwrap();
        let n = normalize(&rc, &ss, &rules, 100);
        let id2 = MorphismExpr::identity(ObjectWord(vec![up(), up()]));
        assert_eq!(n.expr, id2);
        assert!(n.spanning);
    }

    #[test]
    fn canonical_word_realizes_permutation() {
        let w = canonical_word(&[2, 1, 0]);
        assert_eq!(w.len(), 3);
        let mut pi: Vec<usize> = (0..3).collect();
        for &j in &w {
            for v in pi.iter_mut() {
                if *v == j {
                    *v = j + 1;
                } else if *v == j + 1 {
                    *v = j;
                }
            }
        }
        assert_eq!(pi, vec![2, 1, 0]);
    }

    #[test]
    fn saturated_zero_detects_unit_decomposition() {
        let rc = RuleCtx::new(split_field(2), false, 0);
        let ctx = &rc.dctx;
        let id = MorphismExpr::identity(ObjectWord(vec![up()]));
        let tok = |i: usize| {
            MorphismExpr::gen(
                ctx,
                Tok {
                    coords: rc.alg().idempotent_coords(i).unwrap().clone(),
                    orient: Orient::Up,
                    color: None,
                },
            )
        };
        let sum = tok(0).add(&tok(1)).unwrap();
        let diff = id.sub(&sum).unwrap();
        assert!(saturated_is_zero(&rc, &diff));
        let partial = id.sub(&tok(0)).unwrap();
        assert!(!saturated_is_zero(&rc, &partial));
    }

    #[test]
    fn apply_rule_once_reports_nomatch() {
        let rc = RuleCtx::new(ground_field(), false, 0);
        let id = MorphismExpr::identity(ObjectWord(vec![up()]));
        let rule = rule_region_sort();
        assert!(apply_rule_once(&rc, &id, &rule, 0, 0).is_none());
    }

    #[test]
    fn decoration_normalize_merges_stacked_tokens() {
        let rc = RuleCtx::new(dual_numbers(), false, 0);
        let ctx = &rc.dctx;
        let x_tok = MorphismExpr::gen(
            ctx,
            Tok { coords: rc.alg().basis_coords(1), orient: Orient::Up, color: None },
        );
        let stacked = compose(ctx, &x_tok, &x_tok).unwrap();
        let n = normalize(&rc, &stacked, &plain_rules(), 10);
        assert!(n.expr.is_zero());
    }
}
