//! Multitype spatio-temporal patterns with a known conditional-independence
//! structure, for validation and null calibration.
//!
//! All randomness comes from [`RNG_ALGORITHM`]; a given [`SimSpec`] always
//! produces the same pattern.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CoordSystem, Event, MultiPattern, Window};

/// Generator pinned for cross-implementation reproducibility.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha::ChaCha8Rng::seed_from_u64)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimKind {
    HomogeneousPoisson,
    LinkedCluster,
}

/// Shared-parent link between components `i` and `j` (zero-based).
///
/// Each time step draws `Poisson(parent_rate)` latent parents uniformly on
/// the unit square; every parent gets `Poisson(offspring_rate)` offspring in
/// each of the two components, displaced by an isotropic Gaussian with
/// standard deviation `dispersion`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkPair {
    pub i: usize,
    pub j: usize,
    pub parent_rate: f64,
    pub offspring_rate: f64,
    pub dispersion: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkDist {
    Normal { mu: f64, sigma: f64 },
}

impl MarkDist {
    /// Parses `normal:mu,sigma`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("mark distribution `{s}` is not normal:mu,sigma"));
        let rest = s.strip_prefix("normal:").ok_or_else(bad)?;
        let (mu, sigma) = rest.split_once(',').ok_or_else(bad)?;
        let mu: f64 = mu.trim().parse().map_err(|_| bad())?;
        let sigma: f64 = sigma.trim().parse().map_err(|_| bad())?;
        if !(sigma >= 0.0) {
            return Err(Error::Parameter("mark sigma must be non-negative".into()));
        }
        Ok(MarkDist::Normal { mu, sigma })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub kind: SimKind,
    pub d: usize,
    /// Expected events per component per time step, shared-parent offspring included.
    pub rates: Vec<f64>,
    pub t_steps: u32,
    pub link_pairs: Vec<LinkPair>,
    pub seed: u64,
    pub marks: Option<MarkDist>,
}

impl SimSpec {
    pub fn poisson(rates: Vec<f64>, t_steps: u32, seed: u64) -> Self {
        SimSpec {
            kind: SimKind::HomogeneousPoisson,
            d: rates.len(),
            rates,
            t_steps,
            link_pairs: Vec::new(),
            seed,
            marks: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Parameter("d must be at least 2".into()));
        }
        if self.rates.len() != self.d {
            return Err(Error::Parameter(format!("{} rates given for d = {}", self.rates.len(), self.d)));
        }
        if self.rates.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::Parameter("rates must be positive and finite".into()));
        }
        if self.t_steps == 0 {
            return Err(Error::Parameter("T must be at least 1".into()));
        }
        match self.kind {
            SimKind::HomogeneousPoisson if !self.link_pairs.is_empty() => {
                return Err(Error::Parameter("link pairs require kind linked_cluster".into()));
            }
            _ => {}
        }
        let mut shared = vec![0.0; self.d];
        for l in &self.link_pairs {
            if l.i >= self.d || l.j >= self.d || l.i == l.j {
                return Err(Error::Parameter(format!(
                    "link ({}, {}) must reference two distinct components",
                    l.i + 1,
                    l.j + 1
                )));
            }
            if !(l.dispersion > 0.0) || !(l.offspring_rate >= 0.0) || !(l.parent_rate >= 0.0) {
                return Err(Error::Parameter(
                    "dispersion must be > 0, offspring and parent rates >= 0".into(),
                ));
            }
            shared[l.i] += l.parent_rate * l.offspring_rate;
            shared[l.j] += l.parent_rate * l.offspring_rate;
        }
        for (i, (&s, &r)) in shared.iter().zip(&self.rates).enumerate() {
            if s > r {
                return Err(Error::Parameter(format!(
                    "component {}: shared-parent rate {s} exceeds total rate {r}",
                    i + 1
                )));
            }
        }
        if let Some(MarkDist::Normal { sigma, .. }) = self.marks {
            if !(sigma >= 0.0) {
                return Err(Error::Parameter("mark sigma must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Expected fraction of component `i`'s events that descend from shared parents.
    pub fn shared_fraction(&self, i: usize) -> f64 {
        let shared: f64 = self
            .link_pairs
            .iter()
            .filter(|l| l.i == i || l.j == i)
            .map(|l| l.parent_rate * l.offspring_rate)
            .sum();
        shared / self.rates[i]
    }
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub pattern: MultiPattern,
    /// Ground-truth edges `(i, j)` with `i < j`, zero-based.
    pub truth_edges: Vec<(usize, usize)>,
}

/// Offspring position: parent plus isotropic Gaussian displacement, re-drawn
/// until it falls inside the unit square.
pub fn displace(parent: (f64, f64), dispersion: f64, rng: &mut impl Rng) -> (f64, f64) {
    let normal = Normal::new(0.0, dispersion).expect("dispersion validated > 0");
    loop {
        let x = parent.0 + normal.sample(rng);
        let y = parent.1 + normal.sample(rng);
        if (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y) {
            return (x, y);
        }
    }
}

fn poisson_count(rate: f64, rng: &mut impl Rng) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng) as u64
}

pub fn simulate(spec: &SimSpec) -> Result<Simulation> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let background: Vec<f64> = (0..spec.d)
        .map(|i| spec.rates[i] * (1.0 - spec.shared_fraction(i)))
        .collect();
    let mut events = Vec::new();
    for t in 1..=spec.t_steps {
        for link in &spec.link_pairs {
            let parents = poisson_count(link.parent_rate, &mut rng);
            for _ in 0..parents {
                let parent = (rng.random::<f64>(), rng.random::<f64>());
                for comp in [link.i, link.j] {
                    for _ in 0..poisson_count(link.offspring_rate, &mut rng) {
                        let (x, y) = displace(parent, link.dispersion, &mut rng);
                        events.push(Event {
                            x,
                            y,
                            t_idx: t,
                            component: comp,
                            mark: None,
                        });
                    }
                }
            }
        }
        for (i, &rate) in background.iter().enumerate() {
            for _ in 0..poisson_count(rate, &mut rng) {
                events.push(Event {
                    x: rng.random(),
                    y: rng.random(),
                    t_idx: t,
                    component: i,
                    mark: None,
                });
            }
        }
    }
    if let Some(MarkDist::Normal { mu, sigma }) = spec.marks {
        for e in &mut events {
            e.mark = Some(if sigma > 0.0 {
                Normal::new(mu, sigma).expect("validated").sample(&mut rng)
            } else {
                mu
            });
        }
    }
    let labels = (1..=spec.d).map(|i| format!("c{i}")).collect();
    let pattern = MultiPattern::new_allow_empty(events, labels, Window::unit(spec.t_steps), CoordSystem::UnitSquare)?;
    let mut truth_edges: Vec<(usize, usize)> = spec
        .link_pairs
        .iter()
        .filter(|l| l.parent_rate > 0.0 && l.offspring_rate > 0.0)
        .map(|l| (l.i.min(l.j), l.i.max(l.j)))
        .collect();
    truth_edges.sort_unstable();
    truth_edges.dedup();
    Ok(Simulation { pattern, truth_edges })
}

/// Homogeneous Poisson pattern with the per-step rate of each component of
/// `pattern` (its count divided by `T`), on the same labels and `T`. Marked
/// inputs get marks resampled with replacement from the component's own marks.
pub fn null_replicate(pattern: &MultiPattern, seed: u64) -> Result<MultiPattern> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_steps = pattern.t_steps();
    let counts = pattern.counts();
    let marks: Vec<Vec<f64>> = (0..pattern.d())
        .map(|i| pattern.component_events(i).filter_map(|e| e.mark).collect())
        .collect();
    let mut events = Vec::new();
    for t in 1..=t_steps {
        for (i, &n) in counts.iter().enumerate() {
            for _ in 0..poisson_count(n as f64 / t_steps as f64, &mut rng) {
                events.push(Event {
                    x: rng.random(),
                    y: rng.random(),
                    t_idx: t,
                    component: i,
                    mark: None,
                });
            }
        }
    }
    if pattern.is_marked() {
        for e in &mut events {
            let pool = &marks[e.component];
            e.mark = Some(pool[rng.random_range(0..pool.len())]);
        }
    }
    MultiPattern::new_allow_empty(events, pattern.labels().to_vec(), Window::unit(t_steps), CoordSystem::UnitSquare)
}

/// Decorrelated seed for replicate `k` of a run seeded with `base` (SplitMix64).
pub fn replicate_seed(base: u64, k: u64) -> u64 {
    let mut z = base.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
