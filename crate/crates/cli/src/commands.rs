//! Subcommand bodies. Each reads data, runs the library and writes artifacts
//! into the output directory, returning the paths written.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};
use stdgm::classical::{
    estimate_mark_weighted_k, estimate_marked_k, estimate_pair_correlation, scott_bandwidths, CurveEstimate,
    CurveOptions, Plugin,
};
use stdgm::fmt::f17;
use stdgm::graph::{calibrate_null, pattern_graph, per_slice_graphs, require_conditioning, NullCalibration};
use stdgm::ingest::{export_events, intensity_summary, load_events, rescale_to_unit_square};
use stdgm::inverse::{
    conditional_lag_characteristics, homogeneous_intensities, inverse_transform, partial_lag_characteristics,
    scaled_covariance, self_pair_mass, split_atom, LagField,
};
use stdgm::simulate::simulate;
use stdgm::spectra::{coherence, r_spectrum, smooth_spectra, theta_spectrum, PolarSpectrum, SpectralField};
use stdgm::{DependenceGraph, Error, MultiPattern};

use crate::args::{Command, CurveArg, FormatArg};
use crate::config::{Resolved, RunConfig, Source, UsageError, XiSpec};
use crate::output::{field, type_set, write_csv, write_text, Provenance};

struct Data {
    /// Pattern as loaded, in original units (input files only).
    original: Option<MultiPattern>,
    /// Unit-square pattern used by every estimator.
    pattern: MultiPattern,
    report: Option<String>,
    truth: Option<Vec<(usize, usize)>>,
}

struct Ctx {
    config: RunConfig,
    data: Data,
    prov: Provenance,
    out: PathBuf,
    written: Vec<PathBuf>,
}

fn acquire(config: &mut RunConfig) -> anyhow::Result<Data> {
    match &mut config.source {
        Source::Input { path, sha256, options } => {
            let bytes = fs::read(&*path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            *sha256 = hex::encode(Sha256::digest(&bytes));
            let loaded = load_events(&*path, options)?;
            let pattern = rescale_to_unit_square(&loaded.pattern)?;
            Ok(Data {
                report: Some(loaded.report()),
                original: Some(loaded.pattern),
                pattern,
                truth: None,
            })
        }
        Source::Simulation { spec } => {
            let sim = simulate(spec)?;
            Ok(Data {
                original: None,
                pattern: sim.pattern,
                report: None,
                truth: Some(sim.truth_edges),
            })
        }
    }
}

pub fn run(resolved: Resolved) -> anyhow::Result<Vec<PathBuf>> {
    let Resolved {
        command,
        mut config,
        out,
        ..
    } = resolved;
    if command == Command::Ingest && !matches!(config.source, Source::Input { .. }) {
        return Err(UsageError("ingest needs --input".into()).into());
    }
    let data = acquire(&mut config)?;
    if matches!(command, Command::Partial | Command::Graph | Command::Pipeline) {
        require_conditioning(data.pattern.d())?;
    }
    let t = data.pattern.t_steps();
    let prov = Provenance {
        config_hash: config.hash(),
        config_json: config.to_json(),
        grid: config.spectral.grid_for(t)?,
        normalisation: config.spectral.normalisation.as_str(),
        half_widths: config.spectral.half_widths_for(t),
        labels: data.pattern.labels().to_vec(),
    };
    fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let mut ctx = Ctx {
        config,
        data,
        prov,
        out,
        written: Vec::new(),
    };
    if let Some(r) = &ctx.data.report {
        eprintln!("{r}");
    }
    match command {
        Command::Ingest => ingest(&mut ctx)?,
        Command::Simulate => events(&mut ctx)?,
        Command::Classical => classical(&mut ctx)?,
        Command::Spectra => spectra(&mut ctx)?,
        Command::Partial => partial(&mut ctx)?,
        Command::Graph => {
            let f = ctx.config.format();
            graph(&mut ctx, &[f])?
        }
        Command::Invert => invert(&mut ctx)?,
        Command::Pipeline => {
            events(&mut ctx)?;
            classical(&mut ctx)?;
            spectra(&mut ctx)?;
            partial(&mut ctx)?;
            invert(&mut ctx)?;
            graph(&mut ctx, &[FormatArg::Dot, FormatArg::Json])?;
        }
    }
    Ok(ctx.written)
}

fn ingest(ctx: &mut Ctx) -> anyhow::Result<()> {
    events(ctx)?;
    let original = ctx.data.original.as_ref().expect("ingest reads a file");
    let rows = intensity_summary(original);
    let p = write_csv(
        &ctx.out,
        "intensity.csv",
        &ctx.prov,
        &[("units", "unit-square intensity is events per step; original is per unit area of the input window".into())],
        "i,label,t,count,intensity_unit_square,intensity_original",
        |w| {
            for r in &rows {
                let i = original.labels().iter().position(|l| *l == r.label).expect("label present") + 1;
                writeln!(
                    w,
                    "{i},{},{},{},{},{}",
                    field(&r.label),
                    r.t_idx,
                    r.count,
                    f17(r.intensity_unit_square),
                    f17(r.intensity_original)
                )?;
            }
            Ok(())
        },
    )?;
    ctx.written.push(p);
    Ok(())
}

#[derive(Serialize)]
struct Sidecar<'a> {
    config_hash: &'a str,
    labels: &'a [String],
    /// 1-based component pairs.
    truth_edges: Vec<(usize, usize)>,
    spec: &'a stdgm::SimSpec,
    rng: &'a str,
}

/// The event table (original units for files, unit square for simulations),
/// plus the ground-truth sidecar for simulations.
fn events(ctx: &mut Ctx) -> anyhow::Result<()> {
    let pattern = ctx.data.original.as_ref().unwrap_or(&ctx.data.pattern);
    let p = write_csv(&ctx.out, "events.csv", &ctx.prov, &[], "", |w| export_events(pattern, w))?;
    ctx.written.push(p);
    if let (Source::Simulation { spec }, Some(truth)) = (&ctx.config.source, &ctx.data.truth) {
        let sidecar = Sidecar {
            config_hash: &ctx.prov.config_hash,
            labels: ctx.data.pattern.labels(),
            truth_edges: truth.iter().map(|&(i, j)| (i + 1, j + 1)).collect(),
            spec,
            rng: &ctx.config.rng,
        };
        let mut text = serde_json::to_string_pretty(&sidecar)?;
        text.push('\n');
        ctx.written.push(write_text(&ctx.out, "events.json", &text)?);
    }
    Ok(())
}

/// Temporal lags `1, 2, …` strictly below `T/2`, so the border-eroded time
/// interval stays non-empty; `T/4` when there is no such integer.
fn default_t_grid(t_steps: u32) -> Vec<f64> {
    let v: Vec<f64> = (1..).take_while(|&k| 2 * k < t_steps).map(f64::from).collect();
    if v.is_empty() {
        vec![t_steps as f64 / 4.0]
    } else {
        v
    }
}

fn classical(ctx: &mut Ctx) -> anyhow::Result<()> {
    let p = &ctx.data.pattern;
    let cc = &ctx.config.classical;
    let (scott_eps, scott_delta) = scott_bandwidths(p);
    let eps = cc.eps.unwrap_or(scott_eps);
    let delta = cc.delta.unwrap_or(scott_delta);
    let mut r_grid = cc.r_grid.clone().unwrap_or_else(|| (1..=25).map(|k| k as f64 * 0.01).collect());
    let mut t_grid = cc.t_grid.clone().unwrap_or_else(|| default_t_grid(p.t_steps()));
    let curve = cc.curve();
    if curve == CurveArg::G {
        // the kernel estimator is only defined beyond one bandwidth
        r_grid.retain(|&r| r > eps);
        t_grid.retain(|&t| t > delta);
        if r_grid.is_empty() || t_grid.is_empty() {
            return Err(Error::Parameter(format!(
                "pair correlation needs lags beyond the bandwidths (eps = {}, delta = {}); set --r-grid/--t-grid",
                f17(eps),
                f17(delta)
            ))
            .into());
        }
    }
    let mut opts = CurveOptions::new(r_grid, t_grid);
    if !cc.homogeneous {
        opts.plugin = Plugin::Separable {
            eps,
            delta,
            cell_count: cc.intensity_cells,
        };
    }
    let d = p.d();
    let sets: Vec<(Vec<usize>, Vec<usize>)> = match (&cc.types_c, &cc.types_d) {
        (Some(c), dd) => vec![(c.clone(), dd.clone().unwrap_or_else(|| c.clone()))],
        (None, Some(_)) => return Err(UsageError("--types-d needs --types-c".into()).into()),
        (None, None) if curve == CurveArg::MarkK => (0..d).map(|i| (vec![i], vec![i])).collect(),
        (None, None) => (0..d).flat_map(|i| (i..d).map(move |j| (vec![i], vec![j]))).collect(),
    };
    let curves = sets
        .iter()
        .map(|(c, dset)| match curve {
            CurveArg::G => estimate_pair_correlation(p, c, dset, &opts, eps, delta),
            CurveArg::K => estimate_marked_k(p, c, dset, &opts),
            CurveArg::MarkK => {
                if c.len() != 1 {
                    return Err(Error::Parameter("mark-weighted K takes a single component".into()));
                }
                estimate_mark_weighted_k(p, c[0], &opts)
            }
        })
        .collect::<stdgm::Result<Vec<CurveEstimate>>>()?;
    let extra = [
        ("eps", f17(eps)),
        ("delta", f17(delta)),
        ("plugin", if cc.homogeneous { "homogeneous".into() } else { "separable".into() }),
        ("edge_correction", "border".into()),
    ];
    let path = write_csv(&ctx.out, "classical.csv", &ctx.prov, &extra, "r,t,value,kind,C,D", |w| {
        for c in &curves {
            for (ir, r) in c.r_grid.iter().enumerate() {
                for (it, t) in c.t_grid.iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        f17(*r),
                        f17(*t),
                        f17(c.at(ir, it)),
                        cc.curve,
                        type_set(&c.c),
                        type_set(&c.d)
                    )?;
                }
            }
        }
        Ok(())
    })?;
    ctx.written.push(path);
    Ok(())
}

fn write_field(w: &mut dyn Write, f: &SpectralField, kind: &str) -> std::io::Result<()> {
    for idx in 0..f.grid.len() {
        let (p, q, u) = f.grid.freq(idx);
        for i in 0..f.d {
            for j in i..f.d {
                let z = f.entry(idx, i, j);
                writeln!(w, "{p},{q},{u},{},{},{},{},{kind}", i + 1, j + 1, f17(z.re), f17(z.im))?;
            }
        }
    }
    Ok(())
}

fn write_polar(w: &mut dyn Write, s: &PolarSpectrum, quantity: &str, i: usize, j: usize) -> std::io::Result<()> {
    let polar = match s.kind {
        stdgm::spectra::PolarKind::R => "r",
        stdgm::spectra::PolarKind::Theta => "theta",
    };
    for (ui, u) in s.u_values.iter().enumerate() {
        for (b, x) in s.abscissa.iter().enumerate() {
            writeln!(
                w,
                "{polar},{quantity},{},{},{},{u},{},{}",
                i + 1,
                j + 1,
                f17(*x),
                f17(s.values[ui][b]),
                s.counts[ui][b]
            )?;
        }
    }
    Ok(())
}

fn spectra(ctx: &mut Ctx) -> anyhow::Result<()> {
    let s = &ctx.config.spectral;
    let p = &ctx.data.pattern;
    let h = s.half_widths_for(p.t_steps());
    let raw = s.raw_field(p, false)?;
    let smoothed = smooth_spectra(&raw, h);
    let marked = if s.marked {
        Some(smooth_spectra(&s.raw_field(p, true)?, h))
    } else {
        None
    };
    let path = write_csv(&ctx.out, "spectra.csv", &ctx.prov, &[], "p,q,u,i,j,re,im,kind", |w| {
        write_field(w, &raw, "raw")?;
        write_field(w, &smoothed, "smoothed")?;
        if let Some(m) = &marked {
            write_field(w, m, "marked")?;
        }
        Ok(())
    })?;
    ctx.written.push(path);

    let analysed = marked.as_ref().unwrap_or(&smoothed);
    let grid = &analysed.grid;
    let d = analysed.d;
    let path = write_csv(
        &ctx.out,
        "polar.csv",
        &ctx.prov,
        &[("field", if marked.is_some() { "marked".into() } else { "smoothed".into() })],
        "polar,quantity,i,j,bin,u,value,count",
        |w| {
            for i in 0..d {
                for j in i..d {
                    let (quantity, v): (&str, Vec<f64>) = if i == j {
                        ("auto", analysed.entry_field(i, i).iter().map(|z| z.re).collect())
                    } else {
                        ("coherence", coherence(analysed, i, j))
                    };
                    write_polar(w, &r_spectrum(grid, &v), quantity, i, j)?;
                    write_polar(w, &theta_spectrum(grid, &v), quantity, i, j)?;
                }
            }
            Ok(())
        },
    )?;
    ctx.written.push(path);
    Ok(())
}

fn partial(ctx: &mut Ctx) -> anyhow::Result<()> {
    let pf = ctx.config.spectral.partial(&ctx.data.pattern)?;
    let extra = [
        ("field", if pf.marked { "marked".into() } else { "ground".into() }),
        ("unregularised_fraction", f17(pf.unregularised_fraction())),
        ("degenerate", type_set(&pf.degenerate)),
    ];
    let path = write_csv(&ctx.out, "partial.csv", &ctx.prov, &extra, "p,q,u,i,j,re,im,abs_d,ridge", |w| {
        for (k, &(i, j)) in pf.pairs.iter().enumerate() {
            for idx in 0..pf.grid.len() {
                let (p, q, u) = pf.grid.freq(idx);
                let z = pf.coherency[k][idx];
                writeln!(
                    w,
                    "{p},{q},{u},{},{},{},{},{},{}",
                    i + 1,
                    j + 1,
                    f17(z.re),
                    f17(z.im),
                    f17(pf.abs_d[k][idx]),
                    f17(pf.ridge[idx])
                )?;
            }
        }
        Ok(())
    })?;
    ctx.written.push(path);
    Ok(())
}

fn write_lag_series(w: &mut dyn Write, lf: &LagField, kind: &str, values: &[f64], i: usize, j: usize) -> std::io::Result<()> {
    for (idx, v) in values.iter().enumerate() {
        let (cx, cy, h) = lf.lags.lag(idx);
        writeln!(w, "{},{},{h},{},{},{},{kind}", f17(cx), f17(cy), i + 1, j + 1, f17(*v))?;
    }
    Ok(())
}

fn invert(ctx: &mut Ctx) -> anyhow::Result<()> {
    let s = &ctx.config.spectral;
    let p = &ctx.data.pattern;
    let field = s.smoothed_field(p)?;
    let complete = inverse_transform(&field)?;
    let lambda = homogeneous_intensities(p);
    let scaled = scaled_covariance(&complete, &lambda)?;
    let mass = self_pair_mass(p, s.marked, s.normalisation)?;
    let d = p.d();
    let mut partial = Vec::new();
    if d >= 3 {
        for i in 0..d {
            let rest: Vec<usize> = (0..d).filter(|&k| k != i).collect();
            partial.push(conditional_lag_characteristics(&field, &[i], &rest, &s.ridge)?);
        }
        for i in 0..d {
            for j in i + 1..d {
                partial.push(partial_lag_characteristics(&field, i, j, &s.ridge)?);
            }
        }
    }
    let residue = complete.series.iter().map(|x| x.residue).fold(0.0, f64::max);
    let extra = [
        ("lag_grid", format!("c_x=k/{} c_y=l/{} h mod {}", complete.lags.dims()[0], complete.lags.dims()[1], complete.lags.t_steps)),
        ("intensities", lambda.iter().map(|&l| f17(l)).collect::<Vec<_>>().join(";")),
        ("max_imaginary_residue", f17(residue)),
    ];
    let path = write_csv(&ctx.out, "invert.csv", &ctx.prov, &extra, "c_x,c_y,h,i,j,value,kind", |w| {
        for sr in &complete.series {
            write_lag_series(w, &complete, sr.kind.as_str(), &sr.values, sr.i, sr.j)?;
        }
        let zero = complete.lags.index(0, 0, 0).expect("zero lag");
        for (i, &m) in mass.iter().enumerate() {
            let auto = complete.get(i, i).expect("auto series");
            let split = split_atom(&complete.lags, auto, m);
            write_lag_series(w, &complete, "continuous_auto", &split.continuous, i, i)?;
            let (cx, cy, h) = complete.lags.lag(zero);
            writeln!(w, "{},{},{h},{},{},{},atom", f17(cx), f17(cy), i + 1, i + 1, f17(split.atom))?;
        }
        for sr in &scaled.series {
            write_lag_series(w, &scaled, sr.kind.as_str(), &sr.values, sr.i, sr.j)?;
        }
        for lf in &partial {
            for sr in &lf.series {
                // pair fields repeat the auto terms under a smaller conditioning set
                if lf.cond.len() + 2 == d && sr.i == sr.j {
                    continue;
                }
                write_lag_series(w, lf, sr.kind.as_str(), &sr.values, sr.i, sr.j)?;
            }
        }
        Ok(())
    })?;
    ctx.written.push(path);
    Ok(())
}

fn resolve_xi(
    ctx: &Ctx,
    per_slice: bool,
    calibrations: &mut Vec<(&'static str, NullCalibration)>,
) -> anyhow::Result<(f64, String)> {
    match ctx.config.xi_spec().expect("graph requires --xi") {
        XiSpec::Value(v) => Ok((v, ctx.config.xi.clone().unwrap_or_default())),
        XiSpec::Null(q) => {
            let cal = calibrate_null(
                &ctx.data.pattern,
                &ctx.config.spectral,
                q,
                ctx.config.null_replicates,
                ctx.config.seed,
                per_slice,
            )?;
            let source = format!(
                "{} ({} replicates, seed {}, xi {})",
                ctx.config.xi.as_deref().unwrap_or_default(),
                cal.replicates,
                cal.seed,
                f17(cal.xi)
            );
            let xi = cal.xi;
            calibrations.push((if per_slice { "slices" } else { "stdgm" }, cal));
            Ok((xi, source))
        }
    }
}

fn stamp(g: &mut DependenceGraph, ctx: &Ctx, xi_source: &str) -> anyhow::Result<()> {
    g.provenance.tool = format!("stdgm {}", env!("CARGO_PKG_VERSION"));
    g.provenance.config_hash = ctx.prov.config_hash.clone();
    g.provenance.seed = Some(ctx.config.seed);
    g.provenance.rng = ctx.config.rng.clone();
    g.provenance.xi_source = xi_source.to_string();
    g.provenance.config = Some(serde_json::from_str(&ctx.prov.config_json)?);
    Ok(())
}

fn write_graph(ctx: &mut Ctx, g: &DependenceGraph, stem: &str, formats: &[FormatArg]) -> anyhow::Result<()> {
    for f in formats {
        let (name, text) = match f {
            FormatArg::Dot => (format!("{stem}.dot"), g.to_dot()),
            FormatArg::Json => (format!("{stem}.json"), g.to_json()?),
        };
        let p = write_text(&ctx.out, &name, &text)?;
        ctx.written.push(p);
    }
    Ok(())
}

fn graph(ctx: &mut Ctx, formats: &[FormatArg]) -> anyhow::Result<()> {
    let mut calibrations = Vec::new();
    let (xi, source) = resolve_xi(ctx, false, &mut calibrations)?;
    let mut g = pattern_graph(&ctx.data.pattern, &ctx.config.spectral, xi)?;
    stamp(&mut g, ctx, &source)?;
    for w in &g.warnings {
        eprintln!("warning: {w}");
    }
    write_graph(ctx, &g, "graph", formats)?;

    if ctx.config.per_slice {
        let (xi_s, source_s) = resolve_xi(ctx, true, &mut calibrations)?;
        let sg = per_slice_graphs(&ctx.data.pattern, &ctx.config.spectral, xi_s)?;
        for (t, slice) in sg.slices.iter().enumerate() {
            let mut slice = slice.clone();
            stamp(&mut slice, ctx, &source_s)?;
            write_graph(ctx, &slice, &format!("slice_{}", t + 1), formats)?;
        }
        let path = write_csv(&ctx.out, "persistence.csv", &ctx.prov, &[("xi", f17(xi_s))], "i,j,t,present", |w| {
            for row in &sg.persistence {
                for (t, &present) in row.present.iter().enumerate() {
                    writeln!(w, "{},{},{},{}", row.i + 1, row.j + 1, t + 1, u8::from(present))?;
                }
            }
            Ok(())
        })?;
        ctx.written.push(path);
    }

    if !calibrations.is_empty() {
        let extra: Vec<(&str, String)> = calibrations
            .iter()
            .map(|(scope, c)| {
                let text = format!("quantile {} replicates {} seed {} xi {}", f17(c.quantile), c.replicates, c.seed, f17(c.xi));
                (*scope, text)
            })
            .collect();
        let path = write_csv(&ctx.out, "calibration.csv", &ctx.prov, &extra, "scope,replicate,max_statistic", |w| {
            for (scope, c) in &calibrations {
                for (k, m) in c.maxima.iter().enumerate() {
                    writeln!(w, "{scope},{k},{}", f17(*m))?;
                }
            }
            Ok(())
        })?;
        ctx.written.push(path);
    }
    Ok(())
}
