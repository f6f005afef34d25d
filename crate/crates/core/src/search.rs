//! Multi-objective architecture search: NSGA-II over masks with accuracy
//! (maximized) and multiply-adds (minimized), plus a random baseline.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::cost::arch_cost;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::oracle::BenchTable;
use crate::ranking::evaluate_oneshot;
use crate::rng::{stream, Rng};
use crate::space::{sample_layer, sample_mask, ArchMask, SearchSpaceSpec};
use crate::supernet::Supernet;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchBackend {
    Supernet,
    Bench,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub generations: usize,
    pub population: usize,
    /// Offspring must score strictly above this accuracy.
    pub acc_min: f64,
    /// Offspring above this many multiply-adds are rejected unevaluated.
    pub flops_max: u64,
    /// Crowding-distance weights for (accuracy, flops).
    pub weights: [f64; 2],
    pub tournament_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Number of equispaced Pareto picks returned.
    pub picks: usize,
    /// Bernoulli probability used when sampling fresh masks.
    pub p: f64,
    /// Cap on unique evaluations.
    pub max_evaluations: usize,
    pub calibrate: bool,
    pub backend: SearchBackend,
}

impl SearchConfig {
    /// Settings for the micro space; `acc_min` and `flops_max` are chosen
    /// explicitly by the caller in real runs.
    pub fn micro(acc_min: f64, flops_max: u64) -> Self {
        Self {
            generations: 20,
            population: 16,
            acc_min,
            flops_max,
            weights: [1.0, 1.0],
            tournament_size: 2,
            crossover_rate: 1.0,
            mutation_rate: 0.05,
            picks: 5,
            p: 0.5,
            max_evaluations: 500,
            calibrate: true,
            backend: SearchBackend::Supernet,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.population < 2 || !self.population.is_multiple_of(2) {
            return bad(format!("population {} must be even and >= 2", self.population));
        }
        if self.picks == 0 || self.picks > self.population {
            return bad(format!("picks {} must lie in 1..=population", self.picks));
        }
        for (name, r) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} {r} outside [0, 1]"));
            }
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return bad(format!("p = {} must lie in (0, 1)", self.p));
        }
        if self.weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return bad("crowding weights must be positive".into());
        }
        if self.tournament_size == 0 {
            return bad("tournament_size must be >= 1".into());
        }
        if self.max_evaluations == 0 {
            return bad("max_evaluations must be >= 1".into());
        }
        Ok(())
    }
}

fn ser_crowding<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Individual {
    pub mask: ArchMask,
    pub acc: f64,
    pub flops: u64,
    pub rank: usize,
    #[serde(serialize_with = "ser_crowding")]
    pub crowding: f64,
}

impl Individual {
    pub fn new(mask: ArchMask, acc: f64, flops: u64) -> Self {
        Self {
            mask,
            acc,
            flops,
            rank: 0,
            crowding: 0.0,
        }
    }
}

/// `a` is at least as accurate and at most as costly as `b`, and strictly
/// better in one of the two.
pub fn dominates(a: &Individual, b: &Individual) -> bool {
    a.acc >= b.acc && a.flops <= b.flops && (a.acc > b.acc || a.flops < b.flops)
}

/// Fast non-dominated sort. Returns fronts as index lists (each in
/// ascending index order) and writes ranks back.
pub fn non_dominated_sort(pop: &mut [Individual]) -> Vec<Vec<usize>> {
    let n = pop.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates(&pop[i], &pop[j]) {
                dominated_by[i].push(j);
            } else if i != j && dominates(&pop[j], &pop[i]) {
                count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            pop[i].rank = fronts.len();
            for &j in &dominated_by[i] {
                count[j] -= 1;
                if count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Weighted crowding distance within one front: boundary members get
/// infinity, interior members `sum_o w_o * (next - prev) / range_o`.
pub fn crowding_distance(pop: &mut [Individual], front: &[usize], w: [f64; 2]) {
    for &i in front {
        pop[i].crowding = 0.0;
    }
    if front.len() <= 2 {
        for &i in front {
            pop[i].crowding = f64::INFINITY;
        }
        return;
    }
    let objectives: [fn(&Individual) -> f64; 2] = [|x| x.acc, |x| x.flops as f64];
    for (o, obj) in objectives.iter().enumerate() {
        let mut order = front.to_vec();
        order.sort_by(|&a, &b| obj(&pop[a]).total_cmp(&obj(&pop[b])).then(a.cmp(&b)));
        let lo = obj(&pop[order[0]]);
        let hi = obj(&pop[*order.last().expect("nonempty")]);
        pop[order[0]].crowding = f64::INFINITY;
        pop[*order.last().expect("nonempty")].crowding = f64::INFINITY;
        let range = hi - lo;
        if range == 0.0 {
            continue;
        }
        for k in 1..order.len() - 1 {
            let gap = obj(&pop[order[k + 1]]) - obj(&pop[order[k - 1]]);
            pop[order[k]].crowding += w[o] * gap / range;
        }
    }
}

/// Ranks, crowding and survivor selection of `n` individuals.
fn environmental_selection(mut pool: Vec<Individual>, n: usize, w: [f64; 2]) -> Vec<Individual> {
    let fronts = non_dominated_sort(&mut pool);
    for f in &fronts {
        crowding_distance(&mut pool, f, w);
    }
    let mut chosen = Vec::with_capacity(n);
    for f in fronts {
        if chosen.len() + f.len() <= n {
            chosen.extend(f);
        } else {
            let mut f = f;
            f.sort_by(|&a, &b| pool[b].crowding.total_cmp(&pool[a].crowding).then(a.cmp(&b)));
            chosen.extend(f.into_iter().take(n - chosen.len()));
        }
        if chosen.len() == n {
            break;
        }
    }
    chosen.sort_unstable();
    let mut pool: Vec<Option<Individual>> = pool.into_iter().map(Some).collect();
    let mut out: Vec<Individual> = chosen.into_iter().map(|i| pool[i].take().expect("once")).collect();
    // ranks and crowding relative to the survivors
    let fronts = non_dominated_sort(&mut out);
    for f in &fronts {
        crowding_distance(&mut out, f, w);
    }
    out
}

/// `true` if `a` wins a tournament against `b`.
fn better(a: &Individual, b: &Individual) -> bool {
    a.rank < b.rank || (a.rank == b.rank && a.crowding > b.crowding)
}

pub fn tournament_select<'a>(pop: &'a [Individual], size: usize, rng: &mut Rng) -> &'a Individual {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop[rng.random_range(0..pop.len())];
        if better(c, best) {
            best = c;
        }
    }
    best
}

/// Per-layer uniform crossover: each child layer is copied whole from one
/// parent, so it stays a legal selection.
pub fn crossover(a: &ArchMask, b: &ArchMask, rng: &mut Rng) -> ArchMask {
    ArchMask(
        a.layers()
            .iter()
            .zip(b.layers())
            .map(|(&x, &y)| if rng.random_bool(0.5) { x } else { y })
            .collect(),
    )
}

/// Resamples each layer with probability `rate` using the training-time
/// per-layer sampling rule.
pub fn mutate(
    mask: &ArchMask,
    spec: &SearchSpaceSpec,
    rate: f64,
    p: f64,
    rng: &mut Rng,
) -> Result<ArchMask> {
    let mut out = mask.clone();
    for (l, bits) in out.0.iter_mut().enumerate() {
        if rate > 0.0 && rng.random_bool(rate) {
            *bits = sample_layer(spec.layers[l].paths.len(), spec.max_paths, p, rng)?;
        }
    }
    Ok(out)
}

/// Scores architectures for the search.
pub trait Evaluator: Sync {
    fn spec(&self) -> &SearchSpaceSpec;

    fn accuracy(&self, mask: &ArchMask) -> Result<f64>;

    fn flops(&self, mask: &ArchMask) -> Result<u64> {
        Ok(arch_cost(self.spec(), mask)?.flops)
    }
}

/// Looks accuracies up in a bench table.
pub struct BenchEvaluator<'a> {
    pub spec: &'a SearchSpaceSpec,
    index: BTreeMap<&'a ArchMask, (f64, u64)>,
}

impl<'a> BenchEvaluator<'a> {
    pub fn new(spec: &'a SearchSpaceSpec, table: &'a BenchTable) -> Self {
        Self {
            spec,
            index: table.records.iter().map(|r| (&r.mask, (r.acc, r.flops))).collect(),
        }
    }

    fn row(&self, mask: &ArchMask) -> Result<(f64, u64)> {
        self.index
            .get(mask)
            .copied()
            .ok_or_else(|| Error::Mask(format!("{mask} is not in the bench table")))
    }
}

impl Evaluator for BenchEvaluator<'_> {
    fn spec(&self) -> &SearchSpaceSpec {
        self.spec
    }

    fn accuracy(&self, mask: &ArchMask) -> Result<f64> {
        Ok(self.row(mask)?.0)
    }

    fn flops(&self, mask: &ArchMask) -> Result<u64> {
        Ok(self.row(mask)?.1)
    }
}

/// One-shot accuracy with inherited supernet weights.
pub struct SupernetEvaluator<'a> {
    pub net: &'a Supernet,
    pub eval_set: &'a Dataset,
    /// Calibration batches; `None` evaluates with the trained statistics.
    pub calibration: Option<&'a [Tensor]>,
}

impl Evaluator for SupernetEvaluator<'_> {
    fn spec(&self) -> &SearchSpaceSpec {
        self.net.spec()
    }

    fn accuracy(&self, mask: &ArchMask) -> Result<f64> {
        evaluate_oneshot(self.net, mask, self.eval_set, self.calibration)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditEntry {
    pub gen: usize,
    pub mask: ArchMask,
    pub acc: f64,
    pub flops: u64,
    pub rank: usize,
    #[serde(serialize_with = "ser_crowding")]
    pub crowding: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchResult {
    /// Final population.
    pub population: Vec<Individual>,
    /// Rank-0 members of the final population.
    pub front: Vec<Individual>,
    pub picks: Vec<Individual>,
    /// Every generation's population with ranks and crowding.
    pub audit: Vec<AuditEntry>,
    /// Unique architectures evaluated, in evaluation order.
    pub evaluated: Vec<Individual>,
    pub generations_run: usize,
}

impl SearchResult {
    pub fn audit_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for e in &self.audit {
            s.push_str(&serde_json::to_string(e)?);
            s.push('\n');
        }
        Ok(s)
    }
}

/// Memoized, budgeted evaluation shared by both search strategies.
struct Budget<'e, E: Evaluator + ?Sized> {
    eval: &'e E,
    cfg: &'e SearchConfig,
    seen: BTreeMap<ArchMask, f64>,
    order: Vec<Individual>,
}

impl<'e, E: Evaluator + ?Sized> Budget<'e, E> {
    fn new(eval: &'e E, cfg: &'e SearchConfig) -> Self {
        Self {
            eval,
            cfg,
            seen: BTreeMap::new(),
            order: Vec::new(),
        }
    }

    fn remaining(&self) -> usize {
        self.cfg.max_evaluations - self.seen.len()
    }

    /// Evaluates the not-yet-seen masks among `candidates` (in parallel,
    /// within budget) and returns, in order, every candidate that passed
    /// the FLOPS filter and has a known accuracy.
    fn score(&mut self, candidates: &[ArchMask]) -> Result<Vec<Option<Individual>>> {
        let flops: Vec<u64> = candidates
            .iter()
            .map(|m| self.eval.flops(m))
            .collect::<Result<_>>()?;
        let mut fresh: Vec<&ArchMask> = Vec::new();
        let mut queued = BTreeSet::new();
        for (m, &f) in candidates.iter().zip(&flops) {
            if f <= self.cfg.flops_max
                && !self.seen.contains_key(m)
                && queued.insert(m)
                && fresh.len() < self.remaining()
            {
                fresh.push(m);
            }
        }
        let eval = self.eval;
        let accs: Vec<f64> = fresh
            .par_iter()
            .map(|m| eval.accuracy(m))
            .collect::<Result<_>>()?;
        for (m, a) in fresh.into_iter().zip(accs) {
            self.seen.insert(m.clone(), a);
            let f = self.eval.flops(m)?;
            self.order.push(Individual::new(m.clone(), a, f));
        }
        Ok(candidates
            .iter()
            .zip(flops)
            .map(|(m, f)| {
                (f <= self.cfg.flops_max)
                    .then(|| self.seen.get(m).map(|&a| Individual::new(m.clone(), a, f)))
                    .flatten()
            })
            .collect())
    }

    fn feasible(&self, ind: &Individual) -> bool {
        ind.acc > self.cfg.acc_min && ind.flops <= self.cfg.flops_max
    }
}

/// Proposals allowed per wanted individual before giving up.
const ATTEMPTS_PER_SLOT: usize = 200;

/// Collects up to `n` feasible individuals, preferring masks outside
/// `exclude` and distinct from each other. Once half the proposal
/// allowance is spent (tiny or exhausted spaces), copies are admitted too.
fn fill<E: Evaluator + ?Sized>(
    budget: &mut Budget<'_, E>,
    n: usize,
    exclude: &BTreeSet<ArchMask>,
    mut propose: impl FnMut() -> Result<ArchMask>,
) -> Result<Vec<Individual>> {
    let limit = ATTEMPTS_PER_SLOT * n;
    let mut out: Vec<Individual> = Vec::new();
    let mut taken = exclude.clone();
    let mut attempts = 0usize;
    while out.len() < n && attempts < limit {
        let want = n - out.len();
        let batch = (0..want).map(|_| propose()).collect::<Result<Vec<_>>>()?;
        attempts += want;
        let allow_copies = attempts >= limit / 2;
        for ind in budget.score(&batch)?.into_iter().flatten() {
            if out.len() < n
                && budget.feasible(&ind)
                && (taken.insert(ind.mask.clone()) || allow_copies)
            {
                out.push(ind);
            }
        }
    }
    Ok(out)
}

/// NSGA-II following the two-population loop: survivors by rank and
/// weighted crowding, offspring by binary tournament, per-layer crossover
/// and optional mutation, with FLOPS rejection before and accuracy
/// acceptance after evaluation. Stops early once the evaluation budget is
/// spent.
pub fn run_nsga2<E: Evaluator + ?Sized>(
    cfg: &SearchConfig,
    evaluator: &E,
    seed: u64,
) -> Result<SearchResult> {
    cfg.validate()?;
    let spec = evaluator.spec().clone();
    let n = cfg.population;
    let mut init_rng = stream(seed, "search.init");
    let mut tour_rng = stream(seed, "search.tournament");
    let mut cross_rng = stream(seed, "search.crossover");
    let mut mut_rng = stream(seed, "search.mutation");
    let mut budget = Budget::new(evaluator, cfg);

    let initial = fill(&mut budget, 2 * n, &BTreeSet::new(), || {
        sample_mask(&spec, cfg.p, &mut init_rng)
    })?;
    if initial.is_empty() {
        return Err(Error::Infeasible(format!(
            "no architecture with acc > {} and flops <= {} after {} evaluations",
            cfg.acc_min,
            cfg.flops_max,
            budget.seen.len()
        )));
    }
    let split = initial.len().div_ceil(2);
    let mut q: Vec<Individual> = initial[split..].to_vec();
    let mut p = environmental_selection(initial[..split].to_vec(), n.min(split), cfg.weights);
    let mut audit = Vec::new();
    let log = |audit: &mut Vec<AuditEntry>, gen: usize, pop: &[Individual]| {
        audit.extend(pop.iter().map(|i| AuditEntry {
            gen,
            mask: i.mask.clone(),
            acc: i.acc,
            flops: i.flops,
            rank: i.rank,
            crowding: i.crowding,
        }));
    };
    log(&mut audit, 0, &p);
    let mut generations_run = 0;
    for gen in 0..cfg.generations {
        // R = P u Q, duplicates removed, then survivors
        let mut seen = BTreeSet::new();
        let pool: Vec<Individual> = p
            .into_iter()
            .chain(q)
            .filter(|i| seen.insert(i.mask.clone()))
            .collect();
        p = environmental_selection(pool, n, cfg.weights);
        generations_run = gen + 1;
        log(&mut audit, gen + 1, &p);
        if gen + 1 == cfg.generations || budget.remaining() == 0 {
            q = Vec::new();
            break;
        }
        let exclude: BTreeSet<ArchMask> = p.iter().map(|i| i.mask.clone()).collect();
        let parents = p.clone();
        q = fill(&mut budget, n, &exclude, || {
            let a = tournament_select(&parents, cfg.tournament_size, &mut tour_rng);
            let b = tournament_select(&parents, cfg.tournament_size, &mut tour_rng);
            let child = if cross_rng.random_bool(cfg.crossover_rate) {
                crossover(&a.mask, &b.mask, &mut cross_rng)
            } else {
                a.mask.clone()
            };
            mutate(&child, &spec, cfg.mutation_rate, cfg.p, &mut mut_rng)
        })?;
    }
    let _ = q;
    let front: Vec<Individual> = p.iter().filter(|i| i.rank == 0).cloned().collect();
    Ok(SearchResult {
        picks: equispaced_picks(&front, cfg.picks),
        front,
        population: p,
        audit,
        evaluated: budget.order,
        generations_run,
    })
}

/// `k` rank-0 individuals at evenly spaced flops quantiles (the median one
/// for `k = 1`).
pub fn equispaced_picks(front: &[Individual], k: usize) -> Vec<Individual> {
    let mut sorted: Vec<&Individual> = front.iter().collect();
    sorted.sort_by(|a, b| a.flops.cmp(&b.flops).then(b.acc.total_cmp(&a.acc)));
    sorted.dedup_by(|a, b| a.mask == b.mask);
    if sorted.is_empty() || k == 0 {
        return Vec::new();
    }
    let last = sorted.len() - 1;
    let mut idx: Vec<usize> = if k == 1 {
        vec![last / 2]
    } else {
        (0..k)
            .map(|i| ((i * last) as f64 / (k - 1) as f64).round() as usize)
            .collect()
    };
    idx.dedup();
    idx.into_iter().map(|i| sorted[i].clone()).collect()
}

/// Non-dominated members of `pop` (ranks written into the copies).
pub fn pareto_front(pop: &[Individual]) -> Vec<Individual> {
    let mut pop = pop.to_vec();
    let fronts = non_dominated_sort(&mut pop);
    fronts
        .first()
        .map(|f| f.iter().map(|&i| pop[i].clone()).collect())
        .unwrap_or_default()
}

/// Uniform sampling with the same budget accounting as [`run_nsga2`];
/// returns the non-dominated feasible architectures.
pub fn run_random_search<E: Evaluator + ?Sized>(
    cfg: &SearchConfig,
    evaluator: &E,
    seed: u64,
) -> Result<SearchResult> {
    cfg.validate()?;
    let spec = evaluator.spec().clone();
    let mut rng = stream(seed, "search.random");
    let mut budget = Budget::new(evaluator, cfg);
    let mut feasible: Vec<Individual> = Vec::new();
    let mut idle = 0usize;
    while budget.remaining() > 0 && idle < ATTEMPTS_PER_SLOT * cfg.max_evaluations.max(1) {
        let m = sample_mask(&spec, cfg.p, &mut rng)?;
        let before = budget.seen.len();
        let scored = budget.score(std::slice::from_ref(&m))?;
        if budget.seen.len() == before {
            idle += 1;
            continue;
        }
        idle = 0;
        if let Some(ind) = scored.into_iter().flatten().next() {
            if budget.feasible(&ind) {
                feasible.push(ind);
            }
        }
    }
    if feasible.is_empty() {
        return Err(Error::Infeasible(format!(
            "no sampled architecture satisfies acc > {} and flops <= {}",
            cfg.acc_min, cfg.flops_max
        )));
    }
    let front = pareto_front(&feasible);
    Ok(SearchResult {
        picks: equispaced_picks(&front, cfg.picks),
        population: feasible,
        front,
        audit: Vec::new(),
        evaluated: budget.order,
        generations_run: 0,
    })
}

/// Area dominated by `front` and bounded by the reference point
/// `(ref_acc, ref_flops)`; points outside the reference box add nothing.
pub fn hypervolume(front: &[Individual], ref_acc: f64, ref_flops: u64) -> f64 {
    let mut pts: Vec<(u64, f64)> = front
        .iter()
        .filter(|i| i.acc > ref_acc && i.flops < ref_flops)
        .map(|i| (i.flops, i.acc))
        .collect();
    pts.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut best = ref_acc;
    for (k, &(f, a)) in pts.iter().enumerate() {
        best = best.max(a);
        let next = pts.get(k + 1).map_or(ref_flops, |p| p.0);
        area += (next - f) as f64 * (best - ref_acc);
    }
    area
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind(acc: f64, flops: u64) -> Individual {
        Individual::new(ArchMask(vec![1]), acc, flops)
    }

    #[test]
    fn dominance_cases() {
        assert!(dominates(&ind(0.9, 100), &ind(0.8, 150)));
        assert!(!dominates(&ind(0.9, 100), &ind(0.9, 100)));
        assert!(!dominates(&ind(0.9, 150), &ind(0.8, 100)));
        assert!(!dominates(&ind(0.8, 100), &ind(0.9, 150)));
    }

    #[test]
    fn sort_example() {
        let mut pop = vec![ind(0.9, 100), ind(0.8, 50), ind(0.7, 150)];
        let f = non_dominated_sort(&mut pop);
        assert_eq!(f, vec![vec![0, 1], vec![2]]);
        assert_eq!(pop[2].rank, 1);
    }

    #[test]
    fn crowding_three_equispaced() {
        let mut pop = vec![ind(0.1, 300), ind(0.2, 200), ind(0.3, 100)];
        crowding_distance(&mut pop, &[0, 1, 2], [1.0, 1.0]);
        assert!(pop[0].crowding.is_infinite() && pop[2].crowding.is_infinite());
        assert!((pop[1].crowding - 2.0).abs() < 1e-12);
        crowding_distance(&mut pop, &[0, 1, 2], [2.0, 2.0]);
        assert!((pop[1].crowding - 4.0).abs() < 1e-12);
    }

    #[test]
    fn hypervolume_rectangles() {
        let front = vec![ind(0.5, 10), ind(0.75, 20)];
        // reference (0.25, 30): [10,20) x 0.25 + [20,30) x 0.5
        assert!((hypervolume(&front, 0.25, 30) - (2.5 + 5.0)).abs() < 1e-12);
        assert_eq!(hypervolume(&[ind(0.2, 10)], 0.25, 30), 0.0);
    }

    #[test]
    fn picks_are_equispaced() {
        let front: Vec<Individual> = (0..5)
            .map(|i| Individual::new(ArchMask(vec![i + 1]), 0.5 + i as f64 * 0.1, 10 * i as u64))
            .collect();
        let p = equispaced_picks(&front, 3);
        assert_eq!(p.iter().map(|i| i.flops).collect::<Vec<_>>(), vec![0, 20, 40]);
        assert_eq!(equispaced_picks(&front, 1).len(), 1);
    }
}
