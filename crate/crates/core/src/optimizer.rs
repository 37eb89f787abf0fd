//! Seeded genetic search over symmetric decoy settings.
//!
//! A candidate is the vector `[s, μ, ν, p_s, p_μ, p_ν]`. Every candidate is
//! repaired into the feasible set before it is scored, so each evaluation is
//! a valid rate at the design point. Child `k` of generation `g` draws from
//! its own ChaCha stream, which keeps results independent of scheduling.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_key::secure_key_rate;
use crate::noise::all_sifted_counts;
use crate::params::{DecoyParams, SystemParams};
use crate::policy::check_major;

/// Minimum spacing kept between ordered intensities by the repair step.
const ORDER_GAP: f64 = 1e-6;
/// Vacuum send probability kept by the repair step.
const MIN_VACUUM_PROB: f64 = 1e-6;

pub const DECOY_FORMAT: &str = "mdi-atten-decoy";
pub const DECOY_FORMAT_MAJOR: u32 = 1;
pub const DECOY_FORMAT_VERSION: &str = "1.0";

pub type Candidate = [f64; 6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamBounds {
    pub s: [f64; 2],
    pub mu: [f64; 2],
    pub nu: [f64; 2],
    pub p_s: [f64; 2],
    pub p_mu: [f64; 2],
    pub p_nu: [f64; 2],
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            s: [0.05, 0.95],
            mu: [0.01, 0.6],
            nu: [0.001, 0.3],
            p_s: [0.01, 0.95],
            p_mu: [0.01, 0.6],
            p_nu: [0.01, 0.6],
        }
    }
}

impl ParamBounds {
    /// Bounds collapsed onto one candidate.
    pub fn point(c: &Candidate) -> Self {
        Self {
            s: [c[0]; 2],
            mu: [c[1]; 2],
            nu: [c[2]; 2],
            p_s: [c[3]; 2],
            p_mu: [c[4]; 2],
            p_nu: [c[5]; 2],
        }
    }

    fn as_array(&self) -> [[f64; 2]; 6] {
        [self.s, self.mu, self.nu, self.p_s, self.p_mu, self.p_nu]
    }

    fn nu_floor(&self) -> f64 {
        self.nu[0].max(ORDER_GAP)
    }

    /// Err unless some candidate satisfies every bound and constraint.
    pub fn check_feasible(&self) -> Result<()> {
        let names = ["s", "mu", "nu", "p_s", "p_mu", "p_nu"];
        for (name, [lo, hi]) in names.iter().zip(self.as_array()) {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
                return Err(Error::Infeasible(format!(
                    "bound for {name} must satisfy 0 <= lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        let nu = self.nu_floor();
        let mu = self.mu[0].max(nu + ORDER_GAP);
        let s = self.s[0].max(mu + ORDER_GAP);
        if nu > self.nu[1] || mu > self.mu[1] || s > self.s[1] {
            return Err(Error::Infeasible(
                "bounds admit no intensities with s > mu > nu > 0".into(),
            ));
        }
        if self.p_s[0] + self.p_mu[0] + self.p_nu[0] > 1.0 - MIN_VACUUM_PROB {
            return Err(Error::Infeasible(
                "lower probability bounds leave no vacuum probability".into(),
            ));
        }
        for (name, hi) in [
            ("p_s", self.p_s[1]),
            ("p_mu", self.p_mu[1]),
            ("p_nu", self.p_nu[1]),
        ] {
            if hi > 1.0 {
                return Err(Error::Infeasible(format!(
                    "upper bound of {name} exceeds 1"
                )));
            }
        }
        Ok(())
    }

    /// Nearest feasible candidate under a simple bottom-up projection.
    /// Feasible inputs are returned unchanged. Assumes [`Self::check_feasible`] passed.
    pub fn repair(&self, c: &Candidate) -> Candidate {
        let g = ORDER_GAP;
        let nu = c[2].clamp(
            self.nu_floor(),
            self.nu[1].min(self.mu[1] - g).min(self.s[1] - 2.0 * g),
        );
        let mu = c[1].clamp(self.mu[0].max(nu + g), self.mu[1].min(self.s[1] - g));
        let s = c[0].clamp(self.s[0].max(mu + g), self.s[1]);

        let lo = [self.p_s[0], self.p_mu[0], self.p_nu[0]];
        let mut p = [
            c[3].clamp(self.p_s[0], self.p_s[1]),
            c[4].clamp(self.p_mu[0], self.p_mu[1]),
            c[5].clamp(self.p_nu[0], self.p_nu[1]),
        ];
        let cap = 1.0 - MIN_VACUUM_PROB;
        let sum: f64 = p.iter().sum();
        if sum > cap {
            let slack: f64 = p.iter().zip(&lo).map(|(v, l)| v - l).sum();
            // Land slightly inside the cap so a second repair is a no-op.
            let excess = sum - (cap - 1e-12);
            for (v, l) in p.iter_mut().zip(&lo) {
                *v = (*v - excess * (*v - l) / slack).max(*l);
            }
        }
        [s, mu, nu, p[0], p[1], p[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub population_size: usize,
    pub generations: usize,
    pub seed: u64,
    /// Per-arm transmittance of the static design channel.
    pub design_eta: f64,
    pub bounds: ParamBounds,
    pub tournament_size: usize,
    pub elite_count: usize,
    /// Blend-crossover extension factor.
    pub crossover_alpha: f64,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Mutation width as a fraction of each bound's width, first and last generation.
    pub mutation_scale_start: f64,
    pub mutation_scale_end: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            population_size: 64,
            generations: 200,
            seed: 1,
            design_eta: 0.02,
            bounds: ParamBounds::default(),
            tournament_size: 3,
            elite_count: 2,
            crossover_alpha: 0.3,
            crossover_rate: 0.9,
            mutation_rate: 0.3,
            mutation_scale_start: 0.1,
            mutation_scale_end: 0.002,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 8 {
            return Err(Error::InvalidParameter(format!(
                "population must be >= 8, got {}",
                self.population_size
            )));
        }
        if self.elite_count >= self.population_size || self.tournament_size == 0 {
            return Err(Error::InvalidParameter(
                "need 0 < tournament size and elite count < population".into(),
            ));
        }
        if !(self.design_eta > 0.0 && self.design_eta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "design_eta must lie in (0, 1], got {}",
                self.design_eta
            )));
        }
        for (name, v) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        for (name, v) in [
            ("crossover_alpha", self.crossover_alpha),
            ("mutation_scale_start", self.mutation_scale_start),
            ("mutation_scale_end", self.mutation_scale_end),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        self.bounds.check_feasible()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub decoy: DecoyParams,
    pub rate: f64,
    /// Best rate seen after each generation, starting with the initial population.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

pub fn candidate_to_decoy(c: &Candidate) -> DecoyParams {
    DecoyParams::symmetric(c[0], c[1], c[2], c[3], c[4], c[5])
}

pub fn decoy_to_candidate(d: &DecoyParams) -> Candidate {
    [d.s_a, d.mu_a, d.nu_a, d.p_s, d.p_mu, d.p_nu]
}

/// Static finite key rate of a candidate at `(design_eta, design_eta)`.
pub fn evaluate_candidate(c: &Candidate, sys: &SystemParams, design_eta: f64) -> Result<f64> {
    if c[1] == c[2] {
        return Err(Error::DegenerateDecoy { mu: c[1], nu: c[2] });
    }
    let decoy = candidate_to_decoy(c);
    decoy.validate()?;
    let counts = all_sifted_counts(design_eta, design_eta, sys, &decoy)?;
    Ok(secure_key_rate(&counts, sys, &decoy)?.rate)
}

fn fitness(c: &Candidate, sys: &SystemParams, eta: f64) -> f64 {
    evaluate_candidate(c, sys, eta).unwrap_or(f64::NEG_INFINITY)
}

fn rng_for(seed: u64, generation: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 32) | index as u64);
    rng
}

fn tournament(rng: &mut ChaCha8Rng, scores: &[f64], size: usize) -> usize {
    let mut best = rng.random_range(0..scores.len());
    for _ in 1..size {
        let k = rng.random_range(0..scores.len());
        if scores[k] > scores[best] || (scores[k] == scores[best] && k < best) {
            best = k;
        }
    }
    best
}

fn better(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Run the genetic search and return the best candidate found.
pub fn optimize_decoy(
    sys: &SystemParams,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    sys.validate()?;
    settings.validate()?;
    let bounds = &settings.bounds;
    let ranges = bounds.as_array();
    let eta = settings.design_eta;
    let n = settings.population_size;

    let mut pop: Vec<Candidate> = (0..n)
        .map(|k| {
            let mut rng = rng_for(settings.seed, 0, k);
            let mut c = [0.0; 6];
            for (g, [lo, hi]) in c.iter_mut().zip(ranges) {
                *g = lo + (hi - lo) * rng.random::<f64>();
            }
            bounds.repair(&c)
        })
        .collect();
    let mut scores: Vec<f64> = pop.par_iter().map(|c| fitness(c, sys, eta)).collect();
    let mut evaluations = n;

    let best_of = |scores: &[f64]| {
        (0..scores.len())
            .map(|k| (scores[k], k))
            .min_by(|a, b| better(*a, *b))
            .expect("non-empty population")
    };
    let mut history = vec![best_of(&scores).0];

    for gen in 1..=settings.generations {
        let frac = gen as f64 / settings.generations as f64;
        let scale = settings.mutation_scale_start
            + (settings.mutation_scale_end - settings.mutation_scale_start) * frac;
        let mut order: Vec<(f64, usize)> = scores.iter().copied().zip(0..n).collect();
        order.sort_by(|a, b| better(*a, *b));

        let children: Vec<Candidate> = (settings.elite_count..n)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng_for(settings.seed, gen, k);
                let pa = &pop[tournament(&mut rng, &scores, settings.tournament_size)];
                let pb = &pop[tournament(&mut rng, &scores, settings.tournament_size)];
                let mut child = *pa;
                if rng.random::<f64>() < settings.crossover_rate {
                    for (i, g) in child.iter_mut().enumerate() {
                        let (lo, hi) = (pa[i].min(pb[i]), pa[i].max(pb[i]));
                        let ext = settings.crossover_alpha * (hi - lo);
                        *g = (lo - ext) + (hi - lo + 2.0 * ext) * rng.random::<f64>();
                    }
                }
                for (g, [lo, hi]) in child.iter_mut().zip(ranges) {
                    if rng.random::<f64>() < settings.mutation_rate && hi > lo {
                        let normal = Normal::new(0.0, scale * (hi - lo)).expect("finite width");
                        *g += normal.sample(&mut rng);
                    }
                }
                bounds.repair(&child)
            })
            .collect();
        let child_scores: Vec<f64> = children.par_iter().map(|c| fitness(c, sys, eta)).collect();
        evaluations += children.len();

        let mut next = Vec::with_capacity(n);
        let mut next_scores = Vec::with_capacity(n);
        for &(s, k) in order.iter().take(settings.elite_count) {
            next.push(pop[k]);
            next_scores.push(s);
        }
        next.extend(children);
        next_scores.extend(child_scores);
        pop = next;
        scores = next_scores;
        history.push(
            best_of(&scores)
                .0
                .max(*history.last().expect("history starts non-empty")),
        );
    }

    let (rate, k) = best_of(&scores);
    if !rate.is_finite() {
        return Err(Error::Infeasible(
            "no candidate produced a valid key rate".into(),
        ));
    }
    Ok(OptimizationResult {
        decoy: candidate_to_decoy(&pop[k]),
        rate,
        history,
        evaluations,
    })
}

/// JSON document holding optimised decoy settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoyDocument {
    pub format: String,
    pub format_version: String,
    pub decoy: DecoyParams,
    pub rate: f64,
    pub design_eta: f64,
    pub seed: u64,
}

impl DecoyDocument {
    pub fn new(result: &OptimizationResult, settings: &OptimizerSettings) -> Self {
        Self {
            format: DECOY_FORMAT.into(),
            format_version: DECOY_FORMAT_VERSION.into(),
            decoy: result.decoy,
            rate: result.rate,
            design_eta: settings.design_eta,
            seed: settings.seed,
        }
    }

    /// Parse and validate a document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        if doc.format != DECOY_FORMAT {
            return Err(Error::Format(format!("unexpected format '{}'", doc.format)));
        }
        check_major(&doc.format_version, DECOY_FORMAT_MAJOR)?;
        doc.decoy.validate()?;
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::reference_points;
    use proptest::prelude::*;

    fn quick() -> OptimizerSettings {
        OptimizerSettings {
            population_size: 16,
            generations: 20,
            ..Default::default()
        }
    }

    #[test]
    fn reference_rows_evaluate_positive() {
        for r in reference_points() {
            let rate =
                evaluate_candidate(&decoy_to_candidate(&r.decoy), &r.system(), r.design_eta())
                    .unwrap();
            assert!(rate > 0.0);
        }
    }

    #[test]
    fn evaluation_is_the_composed_pipeline() {
        let r = reference_points()[0];
        let sys = r.system();
        let c = decoy_to_candidate(&r.decoy);
        let direct = secure_key_rate(
            &all_sifted_counts(0.03, 0.03, &sys, &r.decoy).unwrap(),
            &sys,
            &r.decoy,
        )
        .unwrap();
        assert_eq!(evaluate_candidate(&c, &sys, 0.03).unwrap(), direct.rate);
    }

    #[test]
    fn equal_decoys_are_rejected() {
        let sys = SystemParams::default();
        let c = [0.45, 0.1, 0.1, 0.5, 0.1, 0.2];
        assert!(matches!(
            evaluate_candidate(&c, &sys, 0.02),
            Err(Error::DegenerateDecoy { .. })
        ));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let sys = SystemParams::default();
        let a = optimize_decoy(&sys, &quick()).unwrap();
        let b = optimize_decoy(&sys, &quick()).unwrap();
        assert_eq!(a, b);
        let c = optimize_decoy(&sys, &OptimizerSettings { seed: 2, ..quick() }).unwrap();
        assert_ne!(a.decoy, c.decoy);
    }

    #[test]
    fn best_so_far_never_decreases() {
        let r = optimize_decoy(&SystemParams::default(), &quick()).unwrap();
        assert_eq!(r.history.len(), 21);
        assert!(r.history.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*r.history.last().unwrap(), r.rate);
        r.decoy.validate().unwrap();
    }

    #[test]
    fn point_bounds_return_the_point() {
        let r = reference_points()[1];
        let c = decoy_to_candidate(&r.decoy);
        let settings = OptimizerSettings {
            bounds: ParamBounds::point(&c),
            design_eta: r.design_eta(),
            ..quick()
        };
        let out = optimize_decoy(&r.system(), &settings).unwrap();
        assert_eq!(out.decoy, r.decoy);
        assert_eq!(
            out.rate,
            evaluate_candidate(&c, &r.system(), r.design_eta()).unwrap()
        );
    }

    #[test]
    fn infeasible_bounds_are_reported() {
        let mut b = ParamBounds::default();
        b.s = [0.01, 0.02];
        b.mu = [0.05, 0.1];
        assert!(matches!(b.check_feasible(), Err(Error::Infeasible(_))));
        let mut b = ParamBounds::default();
        b.p_s = [0.6, 0.9];
        b.p_mu = [0.3, 0.5];
        b.p_nu = [0.2, 0.5];
        assert!(matches!(b.check_feasible(), Err(Error::Infeasible(_))));
        let settings = OptimizerSettings {
            bounds: b,
            ..quick()
        };
        assert!(matches!(
            optimize_decoy(&SystemParams::default(), &settings),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn document_round_trip() {
        let settings = quick();
        let r = optimize_decoy(&SystemParams::default(), &settings).unwrap();
        let doc = DecoyDocument::new(&r, &settings);
        let text = serde_json::to_string_pretty(&doc).unwrap();
        assert_eq!(DecoyDocument::from_json(&text).unwrap(), doc);
        let bumped = text.replace("\"1.0\"", "\"3.1\"");
        assert!(matches!(
            DecoyDocument::from_json(&bumped),
            Err(Error::UnsupportedVersion { .. })
        ));
    }

    proptest! {
        #[test]
        fn repair_lands_in_feasible_set(
            raw in prop::array::uniform6(-1.0f64..2.0),
        ) {
            let b = ParamBounds::default();
            let c = b.repair(&raw);
            let d = candidate_to_decoy(&c);
            prop_assert!(d.validate().is_ok());
            prop_assert!(d.p_vacuum() > 0.0);
            for (g, [lo, hi]) in c.iter().zip(b.as_array()) {
                prop_assert!(*g >= lo && *g <= hi);
            }
            prop_assert_eq!(b.repair(&c), c);
        }
    }
}
