//! Equation and predicate search.
//!
//! Equation search enumerates the expression grammar bottom-up. Every
//! grammar term is affine in its inputs modulo 256, so candidates are
//! deduplicated on their affine signature and only a minimal-cost
//! representative per signature is kept. Constants outside the enumerated
//! range come from offset fitting: the residual histogram of
//! `label - linear_part` picks the constant that matches the most rows.
//!
//! Predicate search scores every literal (and conjunctions of the top
//! literals) by F1 against the labelled rows, with a parsimony penalty so a
//! bare literal beats a marginally better conjunction.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::expr::{Expression, Predicate};
use super::Dataset;

/// Knobs of the regression search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Node-count cap for enumerated expressions.
    pub max_expr_size: u32,
    /// Width of the variable prefilter (rank correlation against the label).
    pub top_k_vars: usize,
    /// Parsimony weight: candidate score is `(1 - accuracy) + lambda * complexity`.
    pub lambda: f64,
    /// Acceptance accuracy floor.
    pub theta: f64,
    /// Rule-set case cap.
    pub max_cases: usize,
    /// Cells never offered to the search (set by intervention refits).
    pub excluded_vars: BTreeSet<usize>,
    /// Optional per-target candidate pool restriction (annotator hints).
    pub var_pool: Option<BTreeSet<usize>>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_expr_size: 7,
            top_k_vars: 8,
            lambda: 0.01,
            theta: 0.98,
            max_cases: 3,
            excluded_vars: BTreeSet::new(),
            var_pool: None,
        }
    }
}

impl SearchConfig {
    pub fn score(&self, accuracy: f64, complexity: u32) -> f64 {
        (1.0 - accuracy) + self.lambda * complexity as f64
    }
}

// ---------------------------------------------------------------------------
// Pattern table: constant-free grammar terms over abstract slots
// ---------------------------------------------------------------------------

/// Abstract leaf slots: two variable slots and up to three action slots.
/// Signature coefficients are canonical mod 256.
type Sig = [u8; 5];

const MAX_TABLE_SIZE: u32 = 7;
const MUL_FACTORS: [i8; 8] = [-4, -3, -2, -1, 1, 2, 3, 4];

#[derive(Clone)]
struct Pattern {
    sig: Sig,
    nodes: u32,
    cx: u32,
    ast: Expression, // Var(0)/Var(1) are slots, Act(0..3) are action slots
}

fn sig_of(ast: &Expression) -> Option<Sig> {
    fn walk(e: &Expression, coef: i64, acc: &mut [i64; 5]) -> bool {
        match e {
            Expression::Const(_) => false, // parts are constant-free
            Expression::Var(k) => {
                if *k > 1 {
                    return false;
                }
                acc[*k] += coef;
                true
            }
            Expression::Act(a) => {
                if *a > 2 {
                    return false;
                }
                acc[2 + *a as usize] += coef;
                true
            }
            Expression::Neg(x) => walk(x, -coef, acc),
            Expression::Add(l, r) => walk(l, coef, acc) && walk(r, coef, acc),
            Expression::Sub(l, r) => walk(l, coef, acc) && walk(r, -coef, acc),
            Expression::MulConst(c, x) => walk(x, coef * *c as i64, acc),
        }
    }
    let mut acc = [0i64; 5];
    if !walk(ast, 1, &mut acc) {
        return None;
    }
    let mut sig = [0u8; 5];
    for (s, a) in sig.iter_mut().zip(acc) {
        *s = a.rem_euclid(256) as u8;
    }
    Some(sig)
}

/// An entry is kept only while no other realization of the same signature
/// has both fewer-or-equal nodes and lower-or-equal cost.
fn dominated(entries: &[(u32, u32)], nodes: u32, cx: u32) -> bool {
    entries.iter().any(|&(n, c)| n <= nodes && c <= cx)
}

fn build_pattern_table() -> Vec<Pattern> {
    let mut best: HashMap<Sig, Vec<(u32, u32)>> = HashMap::new();
    let mut banks: Vec<Vec<Pattern>> = vec![Vec::new(); (MAX_TABLE_SIZE + 1) as usize];
    let mut all: Vec<Pattern> = Vec::new();

    let push = |banks: &mut Vec<Vec<Pattern>>,
                    best: &mut HashMap<Sig, Vec<(u32, u32)>>,
                    all: &mut Vec<Pattern>,
                    ast: Expression| {
        let Some(sig) = sig_of(&ast) else { return };
        if sig == [0u8; 5] {
            return; // degenerate: the all-zero part is never useful
        }
        let nodes = ast.size();
        let cx = ast.complexity();
        let entries = best.entry(sig).or_default();
        if dominated(entries, nodes, cx) {
            return;
        }
        entries.retain(|&(n, c)| !(nodes <= n && cx <= c));
        entries.push((nodes, cx));
        let pat = Pattern { sig, nodes, cx, ast };
        banks[nodes as usize].push(pat.clone());
        all.push(pat);
    };

    for k in 0..2usize {
        push(&mut banks, &mut best, &mut all, Expression::Var(k));
    }
    for a in 0..3u8 {
        push(&mut banks, &mut best, &mut all, Expression::Act(a));
    }

    for size in 2..=MAX_TABLE_SIZE {
        // Unary forms over size-1 children.
        let children: Vec<Expression> =
            banks[(size - 1) as usize].iter().map(|p| p.ast.clone()).collect();
        for child in &children {
            push(&mut banks, &mut best, &mut all, Expression::neg(child.clone()));
            for c in MUL_FACTORS {
                push(&mut banks, &mut best, &mut all, Expression::mul(c, child.clone()));
            }
        }
        // Binary forms.
        for left_size in 1..size - 1 {
            let right_size = size - 1 - left_size;
            let lefts: Vec<Expression> =
                banks[left_size as usize].iter().map(|p| p.ast.clone()).collect();
            let rights: Vec<Expression> =
                banks[right_size as usize].iter().map(|p| p.ast.clone()).collect();
            for l in &lefts {
                for r in &rights {
                    push(&mut banks, &mut best, &mut all, Expression::add(l.clone(), r.clone()));
                    push(&mut banks, &mut best, &mut all, Expression::sub(l.clone(), r.clone()));
                }
            }
        }
    }

    // Keep, per signature, only the (nodes, cx)-Pareto entries with the
    // lexicographically least text as the stable representative.
    let mut by_key: HashMap<(Sig, u32, u32), Pattern> = HashMap::new();
    for pat in all {
        let entries = &best[&pat.sig];
        if !entries.contains(&(pat.nodes, pat.cx)) {
            continue;
        }
        let key = (pat.sig, pat.nodes, pat.cx);
        match by_key.get(&key) {
            Some(old) if old.ast.to_string() <= pat.ast.to_string() => {}
            _ => {
                by_key.insert(key, pat);
            }
        }
    }
    let mut table: Vec<Pattern> = by_key.into_values().collect();
    table.sort_by(|a, b| {
        (a.nodes, a.cx, a.ast.to_string()).cmp(&(b.nodes, b.cx, b.ast.to_string()))
    });
    table
}

fn pattern_table() -> &'static [Pattern] {
    static TABLE: OnceLock<Vec<Pattern>> = OnceLock::new();
    TABLE.get_or_init(build_pattern_table)
}

/// Table entries split by variable usage (none / V0 only / V0 and V1),
/// each sorted by (cx, nodes, text). Pair patterns that use V1 without V0
/// are mirrors of V0-only patterns and were already skipped.
fn usage_lists() -> &'static [Vec<usize>; 3] {
    static LISTS: OnceLock<[Vec<usize>; 3]> = OnceLock::new();
    LISTS.get_or_init(|| {
        let table = pattern_table();
        let mut lists: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (i, p) in table.iter().enumerate() {
            match (p.sig[0] != 0, p.sig[1] != 0) {
                (false, false) => lists[0].push(i),
                (true, false) => lists[1].push(i),
                (true, true) => lists[2].push(i),
                (false, true) => {}
            }
        }
        for list in &mut lists {
            list.sort_by(|&a, &b| {
                (table[a].cx, table[a].nodes, table[a].ast.to_string()).cmp(&(
                    table[b].cx,
                    table[b].nodes,
                    table[b].ast.to_string(),
                ))
            });
        }
        lists
    })
}

// ---------------------------------------------------------------------------
// Variable prefilter
// ---------------------------------------------------------------------------

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Rank the candidate cells by |rank correlation| with the label,
/// ties broken by ascending cell index, and keep the top `top_k_vars`.
pub(crate) fn prefilter_vars(data: &Dataset, config: &SearchConfig) -> Vec<usize> {
    let ram = data.states.first().map_or(0, |s| s.len());
    let labels: Vec<f64> = data.labels.iter().map(|&v| v as f64).collect();
    let mut scored: Vec<(f64, usize)> = (0..ram)
        .filter(|k| !config.excluded_vars.contains(k))
        .filter(|k| config.var_pool.as_ref().map_or(true, |p| p.contains(k)))
        .map(|k| {
            let col: Vec<f64> = data.states.iter().map(|s| s[k] as f64).collect();
            (spearman(&col, &labels).abs(), k)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut vars: Vec<usize> = scored.into_iter().take(config.top_k_vars).map(|(_, k)| k).collect();
    vars.sort_unstable();
    vars
}

// ---------------------------------------------------------------------------
// Equation search
// ---------------------------------------------------------------------------

fn remap(ast: &Expression, vars: &[usize], acts: &[u8]) -> Expression {
    match ast {
        Expression::Const(c) => Expression::Const(*c),
        Expression::Var(slot) => Expression::Var(vars[*slot]),
        Expression::Act(slot) => Expression::Act(acts[*slot as usize]),
        Expression::Neg(e) => Expression::neg(remap(e, vars, acts)),
        Expression::Add(l, r) => Expression::add(remap(l, vars, acts), remap(r, vars, acts)),
        Expression::Sub(l, r) => Expression::sub(remap(l, vars, acts), remap(r, vars, acts)),
        Expression::MulConst(c, e) => Expression::mul(*c, remap(e, vars, acts)),
    }
}

fn signed_const(residual: u8) -> i16 {
    if residual < 128 {
        residual as i16
    } else {
        residual as i16 - 256
    }
}

fn with_offset(part: &Expression, residual: u8) -> Expression {
    let c = signed_const(residual);
    if c >= 0 {
        Expression::add(part.clone(), Expression::Const(c))
    } else {
        Expression::sub(part.clone(), Expression::Const(-c))
    }
}

struct Candidate {
    correct: u32,
    cx: u32,
    expr: Expression,
}

/// Deterministic subsample indices: full data when small, fixed stride otherwise.
fn sample_indices(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        (0..n).collect()
    } else {
        (0..cap).map(|i| i * n / cap).collect()
    }
}

const SAMPLE_CAP: usize = 2048;

/// Residual histograms for one (c0, c1) variable-coefficient group, split
/// by action class so any action-coefficient pattern combines in O(256).
struct GroupHists {
    /// `pos[class][d]` counts rows of that action class with
    /// `(label - c0*x0 - c1*x1) mod 256 == d`.
    pos: Vec<[u32; 256]>,
    /// Same with `(label + c0*x0 + c1*x1) mod 256` for the `C - part` form.
    neg: Vec<[u32; 256]>,
    /// Upper bound on any combined histogram bucket: per-class maxima summed.
    ub: u32,
}

fn build_group(
    c0: i32,
    c1: i32,
    col0: Option<&[u8]>,
    col1: Option<&[u8]>,
    labels: &[u8],
    classes: &[usize],
    n_classes: usize,
) -> GroupHists {
    let mut pos = vec![[0u32; 256]; n_classes];
    let mut neg = vec![[0u32; 256]; n_classes];
    for i in 0..labels.len() {
        let mut v = 0i32;
        if let Some(c) = col0 {
            v += c0 * c[i] as i32;
        }
        if let Some(c) = col1 {
            v += c1 * c[i] as i32;
        }
        let y = labels[i] as i32;
        let class = classes[i];
        pos[class][(y - v).rem_euclid(256) as usize] += 1;
        neg[class][(y + v).rem_euclid(256) as usize] += 1;
    }
    let ub: u32 = pos.iter().map(|h| h.iter().copied().max().unwrap_or(0)).sum();
    GroupHists { pos, neg, ub }
}

/// Combine class histograms under per-class shifts: bucket `d` of the
/// combined histogram counts rows where the full residual
/// `label - part(row)` is `d`, given `part = var_part + shift[class]`.
fn combine(hists: &[[u32; 256]], shifts: &[i32], out: &mut [u32; 256]) {
    out.fill(0);
    for (h, &s) in hists.iter().zip(shifts) {
        let off = s.rem_euclid(256) as usize;
        let split = 256 - off;
        for d in 0..split {
            out[d] += h[d + off];
        }
        for d in split..256 {
            out[d] += h[d + off - 256];
        }
    }
}

/// Best correct-count so far at each complexity level; a later candidate of
/// complexity `cx` can only reach the front by strictly beating the best
/// strictly-cheaper entry.
struct Envelope {
    best_below: Vec<u32>, // indexed by cx, max correct among entries with smaller cx
}

impl Envelope {
    const MAX_CX: usize = 32;

    fn from_candidates(candidates: &[Candidate]) -> Envelope {
        let mut at = vec![0u32; Self::MAX_CX + 1];
        for c in candidates {
            let cx = (c.cx as usize).min(Self::MAX_CX);
            at[cx] = at[cx].max(c.correct);
        }
        let mut best_below = vec![0u32; Self::MAX_CX + 2];
        for cx in 1..=Self::MAX_CX + 1 {
            best_below[cx] = best_below[cx - 1].max(at[cx - 1]);
        }
        Envelope { best_below }
    }

    fn floor_at(&self, cx: u32) -> u32 {
        let cx = (cx as usize).min(Self::MAX_CX + 1);
        self.best_below[cx]
    }
}

struct ScanInput<'a> {
    assign: &'a [usize],
    vars: &'a [usize],
    columns: &'a [Vec<u8>],
    labels: &'a [u8],
    classes: &'a [usize],
    n_classes: usize,
    acts: &'a [u8],
    max_nodes: u32,
    envelope: &'a Envelope,
    total: u32,
}

fn scan_assignment(input: ScanInput<'_>) -> Vec<Candidate> {
    let ScanInput {
        assign,
        vars,
        columns,
        labels,
        classes,
        n_classes,
        acts,
        max_nodes,
        envelope,
        total,
    } = input;
    let table = pattern_table();
    let lists = usage_lists();
    let mut out: Vec<Candidate> = Vec::new();
    let concrete_vars: Vec<usize> = assign.iter().map(|&s| vars[s]).collect();
    let col0 = assign.first().map(|&s| columns[s].as_slice());
    let col1 = assign.get(1).map(|&s| columns[s].as_slice());
    let list = &lists[assign.len()];

    // Applicable patterns, already in (cx, nodes, text) order.
    let applicable: Vec<usize> = list
        .iter()
        .copied()
        .filter(|&pi| {
            let p = &table[pi];
            p.nodes <= max_nodes
                && !p.sig[2..]
                    .iter()
                    .enumerate()
                    .any(|(a, &c)| c != 0 && a >= acts.len())
        })
        .collect();

    // Histograms per distinct (c0, c1) coefficient pair, built lazily: the
    // envelope floor often rules a whole group out before it is ever needed.
    let mut groups: HashMap<(u8, u8), GroupHists> = HashMap::new();

    // Candidate descriptors in ascending complexity order: variant 0 is the
    // bare part, 1 adds a fitted constant, 2 is a fitted constant minus part.
    let mut descriptors: Vec<(u32, usize, usize, u8)> = Vec::new();
    for (pos, &pi) in applicable.iter().enumerate() {
        let p = &table[pi];
        descriptors.push((p.cx, pos, pi, 0));
        if p.nodes + 2 <= max_nodes {
            descriptors.push((p.cx + 2, pos, pi, 1));
            descriptors.push((p.cx + 2, pos, pi, 2));
        }
    }
    descriptors.sort_by_key(|&(cx, pos, _, variant)| (cx, pos, variant));

    let mut running_max: u32 = 0;
    let mut hist = [0u32; 256];
    for (cx, _, pi, variant) in descriptors {
        let floor = running_max.max(envelope.floor_at(cx));
        if floor >= total {
            break; // nothing can strictly beat a perfect cheaper candidate
        }
        let p = &table[pi];
        let key = (p.sig[0], p.sig[1]);
        let group = groups.entry(key).or_insert_with(|| {
            build_group(
                p.sig[0] as i32,
                p.sig[1] as i32,
                col0,
                col1,
                labels,
                classes,
                n_classes,
            )
        });
        if group.ub <= floor {
            continue;
        }
        let mut shifts = [0i32; 4];
        for a in 0..acts.len() {
            shifts[a] = p.sig[2 + a] as i32;
        }
        let (correct, expr) = match variant {
            0 => {
                combine(&group.pos, &shifts[..n_classes], &mut hist);
                (hist[0], remap(&p.ast, &concrete_vars, acts))
            }
            1 => {
                combine(&group.pos, &shifts[..n_classes], &mut hist);
                match best_residual(&hist, true) {
                    Some(r) => {
                        (hist[r as usize], with_offset(&remap(&p.ast, &concrete_vars, acts), r))
                    }
                    None => continue,
                }
            }
            _ => {
                let neg_shifts: Vec<i32> = shifts[..n_classes].iter().map(|&s| -s).collect();
                combine(&group.neg, &neg_shifts, &mut hist);
                match best_residual(&hist, true) {
                    Some(r) => (
                        hist[r as usize],
                        Expression::sub(
                            Expression::Const(signed_const(r)),
                            remap(&p.ast, &concrete_vars, acts),
                        ),
                    ),
                    None => continue,
                }
            }
        };
        if correct > floor && correct > running_max {
            running_max = correct;
            out.push(Candidate { correct, cx, expr });
        }
    }
    out
}

/// Enumerate grammar expressions over the prefiltered variables and return
/// the Pareto front over (1 - accuracy, complexity). No returned element is
/// dominated in both coordinates.
pub fn search_equations(data: &Dataset, config: &SearchConfig) -> Vec<(Expression, f64)> {
    if data.is_empty() {
        return Vec::new();
    }
    let n = data.len();
    let vars = prefilter_vars(data, config);
    let acts: Vec<u8> = data.action_set.iter().copied().take(3).collect();
    let max_nodes = config.max_expr_size.min(MAX_TABLE_SIZE);

    let idx = sample_indices(n, SAMPLE_CAP);
    let sn = idx.len();
    let labels: Vec<u8> = idx.iter().map(|&i| data.labels[i]).collect();
    let columns: Vec<Vec<u8>> = vars
        .iter()
        .map(|&k| idx.iter().map(|&i| data.states[i][k]).collect())
        .collect();
    // Action class of each row; rows with actions outside the declared set
    // (or beyond the three slots) land in a trailing class with zero shift.
    let n_classes = acts.len() + 1;
    let classes: Vec<usize> = idx
        .iter()
        .map(|&i| acts.iter().position(|&a| a == data.actions[i]).unwrap_or(acts.len()))
        .collect();

    // Bare constant baseline: fitted label mode. It also seeds the prune
    // threshold, since anything weaker than the best constant is dominated.
    let mut label_hist = [0u32; 256];
    for &y in &labels {
        label_hist[y as usize] += 1;
    }
    let mut candidates: Vec<Candidate> = Vec::new();
    if let Some(r) = best_residual(&label_hist, false) {
        candidates.push(Candidate {
            correct: label_hist[r as usize],
            cx: 1,
            expr: Expression::Const(signed_const(r)),
        });
    }

    let scan = |assign: &[usize], envelope: &Envelope| -> Vec<Candidate> {
        scan_assignment(ScanInput {
            assign,
            vars: &vars,
            columns: &columns,
            labels: &labels,
            classes: &classes,
            n_classes,
            acts: &acts,
            max_nodes,
            envelope,
            total: sn as u32,
        })
    };

    // Phase 1: the constant-free action-only patterns and every single
    // variable. Their results build a complexity-indexed envelope that
    // pre-seeds the prune threshold for the pair scan: a pair candidate is
    // only interesting if it strictly beats everything cheaper.
    let base_envelope = Envelope::from_candidates(&candidates);
    let mut phase1: Vec<Vec<usize>> = vec![vec![]];
    phase1.extend((0..vars.len()).map(|i| vec![i]));
    let phase1_out: Vec<Vec<Candidate>> =
        phase1.par_iter().map(|a| scan(a, &base_envelope)).collect();
    for out in phase1_out {
        candidates.extend(out);
    }

    let envelope = Envelope::from_candidates(&candidates);
    let mut pairs: Vec<Vec<usize>> = Vec::new();
    for i in 0..vars.len() {
        for j in i + 1..vars.len() {
            pairs.push(vec![i, j]);
        }
    }
    let pair_out: Vec<Vec<Candidate>> = pairs.par_iter().map(|a| scan(a, &envelope)).collect();
    for out in pair_out {
        candidates.extend(out);
    }

    // Exact rescore on the full dataset when the histograms were subsampled.
    let rescore = sn < n;
    let front = pareto_front(candidates, sn as u32);
    let mut scored: Vec<(Expression, f64)> = front
        .into_iter()
        .map(|c| {
            let acc = if rescore { exact_accuracy(&c.expr, data) } else { c.correct as f64 / sn as f64 };
            (c.expr, acc)
        })
        .collect();
    if rescore {
        let rescanned: Vec<Candidate> = scored
            .iter()
            .map(|(e, acc)| Candidate {
                correct: (acc * n as f64).round() as u32,
                cx: e.complexity(),
                expr: e.clone(),
            })
            .collect();
        scored = pareto_front(rescanned, n as u32)
            .into_iter()
            .map(|c| (c.expr.clone(), c.correct as f64 / n as f64))
            .collect();
    }
    scored
}

fn exact_accuracy(expr: &Expression, data: &Dataset) -> f64 {
    let mut correct = 0usize;
    for i in 0..data.len() {
        if expr.eval(&data.row(i)).ok() == Some(data.labels[i]) {
            correct += 1;
        }
    }
    correct as f64 / data.len() as f64
}

/// Pick the residual with the highest count; `skip_zero` drops residual 0
/// (covered by the constant-free form). Ties break toward the smaller
/// signed constant magnitude, then the positive one.
fn best_residual(hist: &[u32; 256], skip_zero: bool) -> Option<u8> {
    let mut best: Option<(u32, u8)> = None;
    for r in 0..256usize {
        if skip_zero && r == 0 {
            continue;
        }
        let count = hist[r];
        if count == 0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((bc, br)) => {
                let (ca, cb) = (signed_const(r as u8), signed_const(br));
                count > bc
                    || (count == bc
                        && (ca.abs(), ca < 0) < (cb.abs(), cb < 0))
            }
        };
        if better {
            best = Some((count, r as u8));
        }
    }
    best.map(|(_, r)| r)
}

fn pareto_front(mut candidates: Vec<Candidate>, _n: u32) -> Vec<Candidate> {
    candidates.sort_by(|a, b| {
        (a.cx, std::cmp::Reverse(a.correct))
            .cmp(&(b.cx, std::cmp::Reverse(b.correct)))
            .then_with(|| a.expr.to_string().cmp(&b.expr.to_string()))
    });
    let mut front: Vec<Candidate> = Vec::new();
    let mut best_correct: Option<u32> = None;
    for c in candidates {
        match best_correct {
            Some(b) if c.correct <= b => {}
            _ => {
                best_correct = Some(c.correct);
                front.push(c);
            }
        }
    }
    front
}

// ---------------------------------------------------------------------------
// Predicate search
// ---------------------------------------------------------------------------

/// A fitted update condition with its precision and recall on the
/// labelled rows.
#[derive(Debug, Clone)]
pub struct PredicateFit {
    pub predicate: Predicate,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

const CONJUNCTION_POOL: usize = 48;
const MAX_NEAR_CONSTS: usize = 24;

fn f1_counts(mask: &[bool], positives: &[bool]) -> (usize, usize, usize) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fnn = 0;
    for (&m, &p) in mask.iter().zip(positives) {
        match (m, p) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            _ => {}
        }
    }
    (tp, fp, fnn)
}

fn prf(tp: usize, fp: usize, fnn: usize) -> (f64, f64, f64) {
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fnn == 0 { 0.0 } else { tp as f64 / (tp + fnn) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Search the best literal or two-literal conjunction separating the
/// positive rows, scored by F1 with a parsimony penalty. `Always` and
/// `Never` are always candidates.
pub fn search_predicate(
    data: &Dataset,
    positives: &[bool],
    config: &SearchConfig,
) -> PredicateFit {
    assert_eq!(positives.len(), data.len());
    let n = data.len();
    let pos_count = positives.iter().filter(|&&p| p).count();
    if pos_count == n {
        return PredicateFit { predicate: Predicate::Always, precision: 1.0, recall: 1.0, f1: 1.0 };
    }
    if pos_count == 0 {
        return PredicateFit { predicate: Predicate::Never, precision: 0.0, recall: 0.0, f1: 0.0 };
    }

    let vars = prefilter_vars_for_predicates(data, config, positives);

    // Literal pool.
    let mut literals: Vec<Predicate> = vec![Predicate::Always, Predicate::Never];
    for &a in &data.action_set {
        literals.push(Predicate::ActEq(a));
    }
    for &k in &vars {
        let mut observed: BTreeSet<u8> = BTreeSet::new();
        for s in &data.states {
            observed.insert(s[k]);
        }
        if observed.len() == 1 {
            continue;
        }
        for &v in &observed {
            literals.push(Predicate::VarEqConst(k, v));
            literals.push(Predicate::VarLtConst(k, v));
        }
    }
    for (i, &k) in vars.iter().enumerate() {
        for &j in &vars[i + 1..] {
            literals.push(Predicate::VarLtVar(k, j));
            literals.push(Predicate::VarLtVar(j, k));
            let mut diffs: BTreeSet<u8> = BTreeSet::new();
            for s in &data.states {
                diffs.insert((s[k] as i32 - s[j] as i32).unsigned_abs().min(254) as u8);
            }
            for d in diffs.into_iter().take(MAX_NEAR_CONSTS) {
                literals.push(Predicate::AbsDiffLt(k, j, d + 1));
            }
        }
    }

    let masks: Vec<Vec<bool>> = literals
        .par_iter()
        .map(|lit| (0..n).map(|i| lit.eval(&data.row(i)).unwrap_or(false)).collect())
        .collect();

    let score_of = |f1: f64, p: &Predicate| f1 - config.lambda * p.complexity() as f64;

    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(literals.len());
    for (i, mask) in masks.iter().enumerate() {
        let (tp, fp, fnn) = f1_counts(mask, positives);
        let (_, _, f1) = prf(tp, fp, fnn);
        scored.push((score_of(f1, &literals[i]), i));
    }
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| literals[a.1].complexity().cmp(&literals[b.1].complexity()))
            .then_with(|| literals[a.1].to_string().cmp(&literals[b.1].to_string()))
    });

    let mut best: Option<(f64, Predicate, Vec<bool>)> = None;
    let consider = |score: f64, p: Predicate, mask: Vec<bool>, best: &mut Option<(f64, Predicate, Vec<bool>)>| {
        let better = match best {
            None => true,
            Some((bs, bp, _)) => {
                score > *bs
                    || (score == *bs
                        && (p.complexity(), p.to_string()) < (bp.complexity(), bp.to_string()))
            }
        };
        if better {
            *best = Some((score, p, mask));
        }
    };

    for &(score, i) in &scored {
        consider(score, literals[i].clone(), masks[i].clone(), &mut best);
    }

    // Conjunctions over the strongest literals (Always/Never excluded:
    // they never improve an And).
    let pool: Vec<usize> = scored
        .iter()
        .map(|&(_, i)| i)
        .filter(|&i| !matches!(literals[i], Predicate::Always | Predicate::Never))
        .take(CONJUNCTION_POOL)
        .collect();
    let pairs: Vec<(f64, Predicate, Vec<bool>)> = pool
        .par_iter()
        .enumerate()
        .flat_map_iter(|(pi, &i)| {
            let mut local = Vec::new();
            for &j in &pool[pi + 1..] {
                let mask: Vec<bool> =
                    masks[i].iter().zip(&masks[j]).map(|(&a, &b)| a && b).collect();
                let (tp, fp, fnn) = f1_counts(&mask, positives);
                if tp == 0 {
                    continue;
                }
                let (_, _, f1) = prf(tp, fp, fnn);
                // Canonical operand order for a stable tie-break.
                let (a, b) = if literals[i].to_string() <= literals[j].to_string() {
                    (literals[i].clone(), literals[j].clone())
                } else {
                    (literals[j].clone(), literals[i].clone())
                };
                let p = Predicate::and(a, b);
                let s = score_of(f1, &p);
                local.push((s, p, mask));
            }
            local
        })
        .collect();
    for (score, p, mask) in pairs {
        consider(score, p, mask, &mut best);
    }

    let (_, predicate, mask) = best.expect("Always is always a candidate");
    let (tp, fp, fnn) = f1_counts(&mask, positives);
    let (precision, recall, f1) = prf(tp, fp, fnn);
    PredicateFit { predicate, precision, recall, f1 }
}

/// Predicate literals draw from the same prefiltered pool as equations,
/// ranked against the positive-row indicator rather than the byte label.
fn prefilter_vars_for_predicates(
    data: &Dataset,
    config: &SearchConfig,
    positives: &[bool],
) -> Vec<usize> {
    let clone = Dataset {
        states: data.states.clone(),
        actions: data.actions.clone(),
        labels: positives.iter().map(|&p| p as u8).collect(),
        action_set: data.action_set.clone(),
    };
    prefilter_vars(&clone, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symreg::expr::Row;

    fn dataset(rows: Vec<(Vec<u8>, u8, u8)>) -> Dataset {
        Dataset {
            states: rows.iter().map(|r| r.0.clone()).collect(),
            actions: rows.iter().map(|r| r.1).collect(),
            labels: rows.iter().map(|r| r.2).collect(),
            action_set: vec![0, 1, 2],
        }
    }

    #[test]
    fn pattern_table_contains_core_shapes() {
        let table = pattern_table();
        // x + y
        assert!(table.iter().any(|p| p.sig == [1, 1, 0, 0, 0] && p.cx == 5));
        // x - 4*a1 + 4*a2 (the joystick-move shape)
        assert!(table
            .iter()
            .any(|p| p.sig == [1, 0, 0, 252, 4] && p.nodes <= 7));
        // -x
        assert!(table.iter().any(|p| p.sig == [255, 0, 0, 0, 0] && p.cx == 3));
    }

    #[test]
    fn finds_sum_of_two_cells() {
        let mut rows = Vec::new();
        for i in 0..200u32 {
            let mut cells = vec![0u8; 8];
            cells[3] = (i * 7 % 200) as u8 + 20;
            cells[5] = if i % 2 == 0 { 2 } else { 254 };
            let label = (cells[3] as i32 + cells[5] as i32).rem_euclid(256) as u8;
            rows.push((cells, (i % 3) as u8, label));
        }
        let data = dataset(rows);
        let front = search_equations(&data, &SearchConfig::default());
        let target = Expression::add(Expression::Var(3), Expression::Var(5));
        let hit = front.iter().find(|(e, _)| *e == target);
        assert!(hit.is_some(), "front was {front:?}");
        assert_eq!(hit.unwrap().1, 1.0);
    }

    #[test]
    fn constant_label_yields_constant() {
        let rows = (0..50)
            .map(|i| {
                let mut cells = vec![0u8; 4];
                cells[1] = i as u8;
                (cells, 0u8, 255u8)
            })
            .collect();
        let data = dataset(rows);
        let front = search_equations(&data, &SearchConfig::default());
        // The exact constant dominates everything else.
        let exact: Vec<_> = front.iter().filter(|(_, acc)| *acc == 1.0).collect();
        assert_eq!(exact.len(), 1);
        assert_eq!(exact[0].0, Expression::Const(-1)); // 255 mod 256, canonical signed
        let mut cells = vec![0u8; 4];
        cells[1] = 7;
        assert_eq!(exact[0].0.eval(&Row::new(&cells, 0)).unwrap(), 255);
    }

    #[test]
    fn front_has_no_dominated_element() {
        let mut rows = Vec::new();
        for i in 0..300u32 {
            let mut cells = vec![0u8; 6];
            cells[0] = (i % 251) as u8;
            cells[2] = (i * 3 % 256) as u8;
            let label = if i % 5 == 0 { 7 } else { cells[0].wrapping_add(3) };
            rows.push((cells, 0u8, label));
        }
        let data = dataset(rows);
        let front = search_equations(&data, &SearchConfig::default());
        for (i, (ei, ai)) in front.iter().enumerate() {
            for (j, (ej, aj)) in front.iter().enumerate() {
                if i == j {
                    continue;
                }
                let dominated = aj >= ai && ej.complexity() <= ei.complexity();
                assert!(!dominated, "{ei} dominated by {ej}");
            }
        }
    }

    #[test]
    fn predicate_for_counter_gate() {
        // Counter cycles 0,1,2; positives are the rows where it reads 2.
        let mut rows = Vec::new();
        let mut positives = Vec::new();
        for i in 0..120u32 {
            let mut cells = vec![0u8; 20];
            cells[18] = (i % 3) as u8;
            cells[4] = (i * 11 % 256) as u8;
            positives.push(cells[18] == 2);
            rows.push((cells, ((i % 7) % 3) as u8, 0u8));
        }
        let data = dataset(rows);
        let fit = search_predicate(&data, &positives, &SearchConfig::default());
        assert_eq!(fit.predicate, Predicate::VarEqConst(18, 2));
        assert_eq!(fit.precision, 1.0);
        assert_eq!(fit.recall, 1.0);
    }

    #[test]
    fn degenerate_labelings() {
        let rows: Vec<(Vec<u8>, u8, u8)> =
            (0..10).map(|i| (vec![i as u8; 4], 0u8, 0u8)).collect();
        let data = dataset(rows);
        let all = vec![true; 10];
        assert_eq!(
            search_predicate(&data, &all, &SearchConfig::default()).predicate,
            Predicate::Always
        );
        let none = vec![false; 10];
        assert_eq!(
            search_predicate(&data, &none, &SearchConfig::default()).predicate,
            Predicate::Never
        );
    }

    #[test]
    fn predicate_for_action() {
        let mut rows = Vec::new();
        let mut positives = Vec::new();
        for i in 0..90u32 {
            let cells = vec![(i % 100) as u8; 6];
            let action = (i % 3) as u8;
            positives.push(action == 1);
            rows.push((cells, action, 0u8));
        }
        let data = dataset(rows);
        let fit = search_predicate(&data, &positives, &SearchConfig::default());
        assert_eq!(fit.predicate, Predicate::ActEq(1));
    }
}

pub(crate) fn debug_table_stats() {
    let table = pattern_table();
    println!("table entries: {}", table.len());
    let mut by_nodes = std::collections::BTreeMap::new();
    for p in table {
        *by_nodes.entry(p.nodes).or_insert(0usize) += 1;
    }
    println!("by nodes: {by_nodes:?}");
}

pub(crate) fn debug_group_stats() {
    let table = pattern_table();
    use std::collections::HashSet;
    let mut pair_groups: HashSet<(u8, u8)> = HashSet::new();
    let mut single_groups: HashSet<u8> = HashSet::new();
    let (mut none_n, mut single_n, mut pair_n) = (0, 0, 0);
    for p in table {
        let (v0, v1) = (p.sig[0], p.sig[1]);
        match (v0 != 0, v1 != 0) {
            (false, false) => none_n += 1,
            (true, false) => {
                single_n += 1;
                single_groups.insert(v0);
            }
            (true, true) => {
                pair_n += 1;
                pair_groups.insert((v0, v1));
            }
            (false, true) => {}
        }
    }
    println!(
        "none {none_n} single {single_n} (groups {}) pair {pair_n} (groups {})",
        single_groups.len(),
        pair_groups.len()
    );
}
