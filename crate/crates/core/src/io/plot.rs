use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::mesh::MeshKind;
use crate::scenario::Problem;
use crate::tensors::{component_labels, SymTensor};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// A static multi-series line chart.
#[derive(Clone, Debug, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
        let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

impl LinePlot {
    pub fn to_svg(&self) -> String {
        let (x0, x1) = range(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let (y0, y1) = range(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_T + (y1 - y) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            MARGIN_L + pw / 2.0,
            escape(&self.title)
        );
        for t in ticks(x0, x1) {
            let x = sx(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#e0e0e0"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                MARGIN_T,
                MARGIN_T + ph,
                MARGIN_T + ph + 16.0,
                tick_label(t)
            );
        }
        for t in ticks(y0, y1) {
            let y = sy(t);
            let _ = writeln!(
                s,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                MARGIN_L,
                MARGIN_L + pw,
                MARGIN_L - 6.0,
                y + 4.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
                pts.join(" ")
            );
            let ly = MARGIN_T + 14.0 + 18.0 * i as f64;
            let lx = MARGIN_L + pw + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                ly - 4.0,
                lx + 18.0,
                ly - 4.0,
                lx + 24.0,
                ly,
                escape(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn viridis(v: f64) -> String {
    // Piecewise-linear approximation between five anchor colors.
    const ANCHORS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let x = v.clamp(0.0, 1.0) * 4.0;
    let i = (x.floor() as usize).min(3);
    let f = x - i as f64;
    let c: Vec<u8> = (0..3)
        .map(|k| (ANCHORS[i][k] + f * (ANCHORS[i + 1][k] - ANCHORS[i][k])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Damage field over a planar mesh, one filled polygon per element.
fn damage_map(problem: &Problem, alpha: &[f64], t: f64) -> String {
    let mesh = &problem.mesh;
    let (x0, x1) = range(mesh.vertices.iter().map(|v| v[0]));
    let (y0, y1) = range(mesh.vertices.iter().map(|v| v[1]));
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let scale = (pw / (x1 - x0)).min(ph / (y1 - y0));
    let sx = |x: f64| MARGIN_L + (x - x0) * scale;
    let sy = |y: f64| MARGIN_T + (y1 - y) * scale;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">damage field at t = {}</text>"#,
        MARGIN_L + pw / 2.0,
        tick_label(t)
    );
    for e in 0..mesh.n_elements() {
        let pts: Vec<String> = mesh.elements[e]
            .vertices
            .iter()
            .map(|&v| format!("{:.2},{:.2}", sx(mesh.vertices[v][0]), sy(mesh.vertices[v][1])))
            .collect();
        let a = mesh.element_mean(e, alpha);
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{}" stroke="{}" stroke-width="0.3"/>"#,
            pts.join(" "),
            viridis(a),
            viridis(a)
        );
    }
    let lx = MARGIN_L + pw + 24.0;
    for i in 0..=10 {
        let v = 1.0 - i as f64 / 10.0;
        let y = MARGIN_T + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{y:.1}" width="18" height="20" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            viridis(v),
            lx + 24.0,
            y + 14.0,
            tick_label(v)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn weighted_mean(problem: &Problem, values: impl Iterator<Item = f64>) -> f64 {
    let mesh = &problem.mesh;
    values
        .zip(&mesh.elements)
        .map(|(v, el)| el.measure * v)
        .sum::<f64>()
        / mesh.measure()
}

fn mean_tensor(problem: &Problem, ts: &[SymTensor]) -> SymTensor {
    let dim = problem.dim();
    let mut out = SymTensor::zeros(dim);
    for (t, el) in ts.iter().zip(&problem.mesh.elements) {
        out += *t * el.measure;
    }
    out * (1.0 / problem.mesh.measure())
}

fn write_svg(dir: &Path, name: &str, svg: String) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes the stress–strain, dilatancy, energy and damage plots.
pub fn emit_plots(problem: &Problem, traj: &Trajectory, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if traj.len() < 2 {
        return Err(Error::Precondition(format!(
            "plotting needs at least 2 snapshots, got {}",
            traj.len()
        )));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dim = problem.dim();
    let snaps = &traj.snapshots;
    let strains: Vec<SymTensor> = snaps
        .iter()
        .map(|s| {
            let total: Vec<SymTensor> = s.e.iter().zip(&s.p).map(|(e, p)| *e + *p).collect();
            mean_tensor(problem, &total)
        })
        .collect();
    let last = strains.last().copied().unwrap_or(SymTensor::zeros(dim));
    let axial = (0..dim)
        .max_by(|&a, &b| last.get(a).abs().total_cmp(&last.get(b).abs()))
        .unwrap_or(0);
    let label = component_labels(dim)[axial];
    let mut files = Vec::new();

    let stress_strain = LinePlot {
        title: "stress-strain response".into(),
        x_label: format!("mean strain {label}"),
        y_label: format!("mean stress {label}"),
        series: vec![Series {
            label: format!("sigma_{label}"),
            points: snaps
                .iter()
                .zip(&strains)
                .map(|(s, eps)| (eps.get(axial), mean_tensor(problem, &s.sigma).get(axial)))
                .collect(),
        }],
    };
    files.push(write_svg(dir, "stress_strain.svg", stress_strain.to_svg())?);

    let dilatancy = LinePlot {
        title: "plastic volume change".into(),
        x_label: "t".into(),
        y_label: "mean tr p".into(),
        series: vec![Series {
            label: "tr p".into(),
            points: snaps
                .iter()
                .map(|s| (s.t, weighted_mean(problem, s.p.iter().map(|p| p.trace()))))
                .collect(),
        }],
    };
    files.push(write_svg(dir, "dilatancy.svg", dilatancy.to_svg())?);

    let component = |label: &str, f: fn(&crate::evolution::EnergyLedger) -> f64| Series {
        label: label.into(),
        points: snaps.iter().map(|s| (s.t, f(&s.energy))).collect(),
    };
    let energies = LinePlot {
        title: "energy components".into(),
        x_label: "t".into(),
        y_label: "energy".into(),
        series: vec![
            component("Q", |e| e.q),
            component("D", |e| e.d),
            component("grad", |e| e.grad),
            component("Qtilde", |e| e.qtilde),
            component("VH", |e| e.vh_cum),
        ],
    };
    files.push(write_svg(dir, "energies.svg", energies.to_svg())?);

    let final_snap = &snaps[snaps.len() - 1];
    let damage = match problem.mesh.kind {
        MeshKind::Point => LinePlot {
            title: "damage".into(),
            x_label: "t".into(),
            y_label: "alpha".into(),
            series: vec![Series {
                label: "alpha".into(),
                points: snaps.iter().map(|s| (s.t, s.alpha[0])).collect(),
            }],
        }
        .to_svg(),
        MeshKind::Segment => {
            let profile = |alpha: &[f64]| -> Vec<(f64, f64)> {
                problem
                    .mesh
                    .vertices
                    .iter()
                    .zip(alpha)
                    .map(|(v, a)| (v[0], *a))
                    .collect()
            };
            LinePlot {
                title: "damage profile".into(),
                x_label: "x".into(),
                y_label: "alpha".into(),
                series: vec![
                    Series {
                        label: format!("t = {}", tick_label(snaps[0].t)),
                        points: profile(&snaps[0].alpha),
                    },
                    Series {
                        label: format!("t = {}", tick_label(final_snap.t)),
                        points: profile(&final_snap.alpha),
                    },
                ],
            }
            .to_svg()
        }
        MeshKind::Rect => damage_map(problem, &final_snap.alpha, final_snap.t),
    };
    files.push(write_svg(dir, "damage.svg", damage)?);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_range_with_round_steps() {
        let t = ticks(-0.037, 0.002);
        assert!(t.len() >= 3 && t.len() <= 11);
        assert!(t.iter().all(|v| (-0.037..=0.002).contains(v)));
        let steps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(steps.iter().all(|s| (s - steps[0]).abs() < 1e-12));
    }

    #[test]
    fn labels_are_escaped() {
        let svg = LinePlot {
            title: "a < b & c".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series {
                label: "s".into(),
                points: vec![(0.0, 0.0), (1.0, 1.0)],
            }],
        }
        .to_svg();
        assert!(svg.contains("a &lt; b &amp; c"));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }
}
