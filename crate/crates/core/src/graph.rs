//! Dependence graphs obtained by thresholding `sup_w |d_ij(w)|`, per-slice
//! spatial graphs, Poisson null calibration of the threshold, and DOT/JSON
//! export.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::SpectralSettings;
use crate::error::{Error, Freq, Result};
use crate::fmt::f17;
use crate::ingest::MultiPattern;
use crate::partial::PartialField;
use crate::simulate::{null_replicate, replicate_seed, RNG_ALGORITHM};
use crate::spectra::FrequencyGrid;

/// Serialises NaN as `null` so degenerate statistics survive JSON.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Edge statistic for one unordered pair `i < j` (zero-based).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairStatistic {
    pub i: usize,
    pub j: usize,
    /// `S_ij = max |d_ij(w)|` over the statistic grid points; NaN when undefined.
    #[serde(with = "nan_as_null")]
    pub statistic: f64,
    /// `(p, q, u)` attaining the maximum (first in grid order on ties).
    pub argmax: Option<Freq>,
    /// Some grid point was singular after all ridges, so the supremum skips it.
    pub unreliable: bool,
}

impl PartialEq for PairStatistic {
    fn eq(&self, o: &Self) -> bool {
        self.i == o.i
            && self.j == o.j
            && self.statistic.to_bits() == o.statistic.to_bits()
            && self.argmax == o.argmax
            && self.unreliable == o.unreliable
    }
}

/// Run metadata embedded in every exported graph.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub rng: String,
    pub normalisation: String,
    pub half_widths: Option<(u32, u32, u32)>,
    /// How `xi` was chosen: a literal value or `null:qNN` calibration.
    pub xi_source: String,
    /// Resolved run configuration, when produced by a front end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependenceGraph {
    pub labels: Vec<String>,
    pub xi: f64,
    pub grid: FrequencyGrid,
    pub marked: bool,
    /// Every unordered pair, in `(0,1), (0,2), …` order.
    pub pairs: Vec<PairStatistic>,
    /// Pairs with `statistic ≥ xi`.
    pub edges: Vec<(usize, usize)>,
    pub isolated: Vec<usize>,
    /// Components whose auto-spectrum vanishes identically (for example
    /// constant marks); the graph carries no information when non-empty.
    pub degenerate: Vec<usize>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

impl DependenceGraph {
    pub fn d(&self) -> usize {
        self.labels.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn is_degenerate(&self) -> bool {
        !self.degenerate.is_empty()
    }

    pub fn statistic(&self, i: usize, j: usize) -> Option<&PairStatistic> {
        let key = (i.min(j), i.max(j));
        self.pairs.iter().find(|p| (p.i, p.j) == key)
    }

    /// Same statistics with a different threshold.
    pub fn rethreshold(&self, xi: f64) -> DependenceGraph {
        let mut g = self.clone();
        g.xi = xi;
        g.provenance.xi_source = f17(xi);
        g.edges = g.pairs.iter().filter(|p| p.statistic >= xi).map(|p| (p.i, p.j)).collect();
        g.isolated = isolated(g.d(), &g.edges);
        g
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<DependenceGraph> {
        Ok(serde_json::from_str(s)?)
    }

    /// Undirected DOT with `S` and the argmax frequency as edge attributes.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph stdgm {\n");
        out.push_str(&format!("  graph [xi=\"{}\"", f17(self.xi)));
        out.push_str(&format!(
            ", grid=\"p=0..{} q={}..{} u={}..{} T={} include_dc={}\"",
            self.grid.p_max, self.grid.q_min, self.grid.q_max, self.grid.u_min, self.grid.u_max, self.grid.t_steps,
            self.grid.include_dc
        ));
        out.push_str(&format!(
            ", config_hash=\"{}\", seed=\"{}\", marked=\"{}\"",
            self.provenance.config_hash,
            self.provenance.seed.map_or("none".into(), |s| s.to_string()),
            self.marked
        ));
        out.push_str(&format!(", normalisation=\"{}\"", self.provenance.normalisation));
        if let Some((hp, hq, hu)) = self.provenance.half_widths {
            out.push_str(&format!(", smoothing=\"daniell h=({hp},{hq},{hu})\""));
        }
        if let Some(cfg) = &self.provenance.config {
            out.push_str(&format!(", config=\"{}\"", escape(&cfg.to_string())));
        }
        if self.is_degenerate() {
            let names: Vec<&str> = self.degenerate.iter().map(|&i| self.labels[i].as_str()).collect();
            out.push_str(&format!(", degenerate=\"{}\"", names.join(",")));
        }
        out.push_str("];\n");
        for (k, label) in self.labels.iter().enumerate() {
            let attrs = if self.isolated.contains(&k) { " [isolated=\"true\"]" } else { "" };
            out.push_str(&format!("  \"{}\"{attrs};\n", escape(label)));
        }
        for &(i, j) in &self.edges {
            let st = self.statistic(i, j).expect("edge has a statistic");
            let (p, q, u) = st.argmax.unwrap_or((0, 0, 0));
            out.push_str(&format!(
                "  \"{}\" -- \"{}\" [S=\"{}\", argmax=\"({p},{q},{u})\"{}];\n",
                escape(&self.labels[i]),
                escape(&self.labels[j]),
                f17(st.statistic),
                if st.unreliable { ", unreliable=\"true\"" } else { "" }
            ));
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn isolated(d: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    (0..d).filter(|&k| !edges.iter().any(|&(i, j)| i == k || j == k)).collect()
}

/// Supremum statistic for every pair and the graph at threshold `xi`.
pub fn build_dependence_graph(partial: &PartialField, labels: &[String], xi: f64) -> Result<DependenceGraph> {
    if labels.len() != partial.d {
        return Err(Error::Parameter(format!("{} labels for d = {}", labels.len(), partial.d)));
    }
    if xi.is_nan() {
        return Err(Error::Parameter("xi must be a number".into()));
    }
    let stat = partial.grid.stat_indices();
    let any_singular = stat.iter().any(|&k| partial.singular[k]);
    let mut warnings = Vec::new();
    if partial.is_degenerate() {
        let names: Vec<&str> = partial.degenerate.iter().map(|&i| labels[i].as_str()).collect();
        warnings.push(format!(
            "degenerate components {}: auto-spectrum vanishes (constant marks or no events); no edges can be assessed",
            names.join(", ")
        ));
    } else if any_singular {
        let n = stat.iter().filter(|&&k| partial.singular[k]).count();
        warnings.push(format!(
            "{n} grid points remained singular after regularisation; statistics skip them and are flagged unreliable"
        ));
    }
    let pairs: Vec<PairStatistic> = partial
        .pairs
        .iter()
        .enumerate()
        .map(|(pi, &(i, j))| {
            let mut best = f64::NAN;
            let mut arg = None;
            if !partial.is_degenerate() {
                for &k in &stat {
                    let v = partial.abs_d[pi][k];
                    if !v.is_nan() && (best.is_nan() || v > best) {
                        best = v;
                        arg = Some(partial.grid.freq(k));
                    }
                }
            }
            PairStatistic {
                i,
                j,
                statistic: best,
                argmax: arg,
                unreliable: any_singular && !partial.is_degenerate(),
            }
        })
        .collect();
    let edges: Vec<(usize, usize)> = pairs.iter().filter(|p| p.statistic >= xi).map(|p| (p.i, p.j)).collect();
    Ok(DependenceGraph {
        labels: labels.to_vec(),
        xi,
        grid: partial.grid.clone(),
        marked: partial.marked,
        isolated: isolated(partial.d, &edges),
        pairs,
        edges,
        degenerate: partial.degenerate.clone(),
        warnings,
        provenance: Provenance {
            tool: concat!("stdgm ", env!("CARGO_PKG_VERSION")).into(),
            rng: RNG_ALGORITHM.into(),
            xi_source: f17(xi),
            ..Default::default()
        },
    })
}

/// Full pattern to graph.
pub fn pattern_graph(pattern: &MultiPattern, settings: &SpectralSettings, xi: f64) -> Result<DependenceGraph> {
    require_conditioning(pattern.d())?;
    let partial = settings.partial(pattern)?;
    let mut g = build_dependence_graph(&partial, pattern.labels(), xi)?;
    g.provenance.normalisation = settings.normalisation.as_str().to_string();
    g.provenance.half_widths = Some(settings.half_widths_for(pattern.t_steps()));
    Ok(g)
}

/// Partial statistics condition on the other components, which needs `d ≥ 3`.
pub fn require_conditioning(d: usize) -> Result<()> {
    if d < 3 {
        return Err(Error::Contract(format!(
            "partial characteristics condition on the remaining components and need d >= 3; got d = {d}"
        )));
    }
    Ok(())
}

/// Presence of one pair across time slices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Persistence {
    pub i: usize,
    pub j: usize,
    /// Per slice, whether the edge is present.
    pub present: Vec<bool>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceGraphs {
    /// One purely spatial graph per time step, in order.
    pub slices: Vec<DependenceGraph>,
    pub persistence: Vec<Persistence>,
}

/// Spatial graph for each time step (the analysis rerun with `T = 1`) and the
/// edge persistence table. Unlike [`pattern_graph`] this accepts `d = 2`,
/// where `|d_12|` is the ordinary coherency modulus.
pub fn per_slice_graphs(pattern: &MultiPattern, settings: &SpectralSettings, xi: f64) -> Result<SliceGraphs> {
    let slices = (1..=pattern.t_steps())
        .map(|t| {
            let slice = pattern.time_slice(t)?;
            let partial = settings.partial(&slice)?;
            let mut g = build_dependence_graph(&partial, slice.labels(), xi)?;
            g.provenance.normalisation = settings.normalisation.as_str().to_string();
            g.provenance.half_widths = Some(settings.half_widths_for(1));
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SliceGraphs {
        persistence: persistence_table(&slices),
        slices,
    })
}

pub fn persistence_table(slices: &[DependenceGraph]) -> Vec<Persistence> {
    let d = slices.first().map_or(0, |g| g.d());
    (0..d)
        .flat_map(|i| (i + 1..d).map(move |j| (i, j)))
        .map(|(i, j)| {
            let present: Vec<bool> = slices.iter().map(|g| g.has_edge(i, j)).collect();
            Persistence {
                i,
                j,
                count: present.iter().filter(|&&b| b).count(),
                present,
            }
        })
        .collect()
}

/// Monte-Carlo null for the threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullCalibration {
    pub quantile: f64,
    pub replicates: usize,
    pub seed: u64,
    /// `xi`: the `ceil(quantile·replicates)`-th smallest replicate maximum.
    pub xi: f64,
    /// `max_{i<j} S_ij` per replicate, in replicate order.
    pub maxima: Vec<f64>,
}

/// Parses `null:qNN` (for example `null:q95`) into the quantile `NN/100`.
pub fn parse_null_spec(s: &str) -> Option<f64> {
    let q: f64 = s.strip_prefix("null:q")?.parse().ok()?;
    (q > 0.0 && q < 100.0).then_some(q / 100.0)
}

/// Calibrates `xi` as the `quantile` of `max_{i<j} S_ij` over homogeneous
/// Poisson replicates with the per-step rates of `pattern` (per time slice
/// when `per_slice`). Replicate `k` uses seed `replicate_seed(seed, k)`.
pub fn calibrate_null(
    pattern: &MultiPattern,
    settings: &SpectralSettings,
    quantile: f64,
    replicates: usize,
    seed: u64,
    per_slice: bool,
) -> Result<NullCalibration> {
    if !(quantile > 0.0 && quantile < 1.0) || replicates == 0 {
        return Err(Error::Parameter("null calibration needs 0 < quantile < 1 and at least one replicate".into()));
    }
    let maxima = (0..replicates)
        .into_par_iter()
        .map(|k| {
            let sim = null_replicate(pattern, replicate_seed(seed, k as u64))?;
            let mut m = f64::NEG_INFINITY;
            let parts = if per_slice {
                (1..=sim.t_steps()).map(|t| sim.time_slice(t)).collect::<Result<Vec<_>>>()?
            } else {
                vec![sim]
            };
            for p in &parts {
                let g = build_dependence_graph(&settings.partial(p)?, p.labels(), f64::INFINITY)?;
                for s in &g.pairs {
                    if s.statistic > m {
                        m = s.statistic;
                    }
                }
            }
            Ok(m)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut sorted = maxima.clone();
    sorted.sort_by(f64::total_cmp);
    let rank = ((quantile * replicates as f64).ceil() as usize).clamp(1, replicates);
    Ok(NullCalibration {
        quantile,
        replicates,
        seed,
        xi: sorted[rank - 1],
        maxima,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn toy(abs: Vec<Vec<f64>>, singular: Vec<bool>) -> PartialField {
        let grid = FrequencyGrid {
            p_max: 1,
            q_min: 0,
            q_max: 1,
            u_min: 0,
            u_max: 0,
            t_steps: 1,
            include_dc: false,
        };
        let n = grid.len();
        let np = abs.len();
        PartialField {
            grid,
            d: 3,
            marked: false,
            pairs: vec![(0, 1), (0, 2), (1, 2)],
            cross: vec![vec![Complex64::new(0.0, 0.0); n]; np],
            coherency: vec![vec![Complex64::new(0.0, 0.0); n]; np],
            abs_d: abs,
            auto_i: vec![vec![1.0; n]; np],
            auto_j: vec![vec![1.0; n]; np],
            ridge: vec![0.0; n],
            singular,
            degenerate: vec![],
        }
    }

    fn labels() -> Vec<String> {
        vec!["a".into(), "b".into(), "c".into()]
    }

    #[test]
    fn sup_skips_dc_and_records_argmax() {
        // grid order: (0,0,0) DC, (0,1,0), (1,0,0), (1,1,0)
        let pf = toy(
            vec![vec![0.99, 0.2, 0.7, 0.7], vec![0.1; 4], vec![0.0, 0.3, 0.2, 0.1]],
            vec![false; 4],
        );
        let g = build_dependence_graph(&pf, &labels(), 0.5).unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
        let s = g.statistic(1, 0).unwrap();
        assert_eq!(s.statistic, 0.7);
        assert_eq!(s.argmax, Some((1, 0, 0)));
        assert_eq!(g.isolated, vec![2]);
        assert!(g.warnings.is_empty());
    }

    #[test]
    fn singular_points_flag_statistics() {
        let pf = toy(vec![vec![0.0, f64::NAN, 0.4, 0.1]; 3], vec![false, true, false, false]);
        let g = build_dependence_graph(&pf, &labels(), 0.3).unwrap();
        assert!(g.pairs.iter().all(|p| p.unreliable && p.statistic == 0.4));
        assert_eq!(g.warnings.len(), 1);
    }

    #[test]
    fn null_spec_parsing() {
        assert_eq!(parse_null_spec("null:q95"), Some(0.95));
        assert_eq!(parse_null_spec("null:q99.5"), Some(0.995));
        assert_eq!(parse_null_spec("q95"), None);
        assert_eq!(parse_null_spec("null:q100"), None);
    }

    #[test]
    fn dot_of_empty_graph() {
        let pf = toy(vec![vec![0.1; 4]; 3], vec![false; 4]);
        let g = build_dependence_graph(&pf, &labels(), 2.0).unwrap();
        let dot = g.to_dot();
        assert_eq!(dot.matches(" -- ").count(), 0);
        assert!(dot.contains("  \"a\" [isolated=\"true\"];\n"));
        assert_eq!(dot.lines().filter(|l| l.contains("isolated")).count(), 3);
    }
}
