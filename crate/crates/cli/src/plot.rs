//! SVG 1.1 line plots of the study CSV files.

use std::fmt::Write;

/// The CSV schemas that can be plotted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Eig,
    Exhaust,
    Decay,
    Weyl,
    Torsion,
    Perturb,
}

impl Kind {
    pub fn parse(s: &str) -> Option<Kind> {
        Some(match s {
            "eig" => Kind::Eig,
            "exhaust" => Kind::Exhaust,
            "decay" => Kind::Decay,
            "weyl" => Kind::Weyl,
            "torsion" | "blowup" => Kind::Torsion,
            "perturb" => Kind::Perturb,
            _ => return None,
        })
    }

    fn detect(header: &str) -> Option<Kind> {
        Some(match header {
            "domain,R,h,j,lambda,residual" => Kind::Eig,
            "R,h,j,lambda,residual,below_threshold,margin" => Kind::Exhaust,
            "R,A,S,paper_bound,pass" => Kind::Decay,
            "lambda,n,energy,l2,dual_residual,sqrtn_scaled_residual,probe1,probe2,probe3" => Kind::Weyl,
            "eps,R_inf,L,T,T_over_eps2,gamma,bound_ok" => Kind::Torsion,
            "n,eps,lambda1_pert,drop,drop_over_eps2,T,T_over_eps2,inradius2,rho,verdict" => Kind::Perturb,
            _ => return None,
        })
    }
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn col(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).expect("schema column")
    }

    fn num(&self, row: &[String], name: &str) -> Result<f64, String> {
        let s = &row[self.col(name)];
        s.parse().map_err(|_| format!("column {name}: `{s}` is not a number"))
    }

    /// Groups (x, y) points by the value of `key` (or one group when `None`).
    fn series(&self, key: Option<&str>, x: &str, y: &str) -> Result<Vec<Series>, String> {
        let mut out: Vec<Series> = Vec::new();
        for row in &self.rows {
            let label = key.map_or(String::new(), |k| format!("{k}={}", row[self.col(k)]));
            let p = (self.num(row, x)?, self.num(row, y)?);
            match out.iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push(p),
                None => out.push(Series { label, points: vec![p] }),
            }
        }
        Ok(out)
    }
}

/// Renders `csv` as an SVG plot. `kind`, when given, must match the detected schema.
pub fn plot_csv(csv: &str, kind: Option<Kind>, log_y: bool) -> Result<String, String> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty CSV")?;
    let detected = Kind::detect(header).ok_or_else(|| format!("unrecognized CSV header `{header}`"))?;
    if let Some(k) = kind {
        if k != detected {
            return Err(format!("CSV schema is {detected:?}, not {k:?}"));
        }
    }
    let table = Table {
        header: header.split(',').map(str::to_string).collect(),
        rows: lines.map(|l| l.split(',').map(str::to_string).collect()).collect(),
    };
    if table.rows.is_empty() {
        return Err("CSV has a header but no rows".into());
    }
    if let Some(r) = table.rows.iter().find(|r| r.len() != table.header.len()) {
        return Err(format!("row `{}` has {} fields, expected {}", r.join(","), r.len(), table.header.len()));
    }
    let (title, xl, yl, series, log) = match detected {
        Kind::Eig => ("Eigenvalues", "j", "lambda", table.series(None, "j", "lambda")?, log_y),
        Kind::Exhaust => ("Exhaustion", "R", "lambda_j(R)", table.series(Some("j"), "R", "lambda")?, log_y),
        Kind::Decay => {
            let mut s = table.series(None, "R", "A")?;
            s[0].label = "A(R)".into();
            let mut b = table.series(None, "R", "paper_bound")?;
            b[0].label = "bound".into();
            s.append(&mut b);
            ("Tail decay", "R", "L2 tail", s, true)
        }
        Kind::Weyl => ("Weyl sequences", "n", "dual residual", table.series(Some("lambda"), "n", "dual_residual")?, log_y),
        Kind::Torsion => {
            let eps: Vec<f64> = table.rows.iter().map(|r| table.num(r, "eps")).collect::<Result<_, _>>()?;
            if eps.iter().all(|&e| e == eps[0]) {
                ("Blow-up torsion", "R_inf", "T", table.series(Some("L"), "R_inf", "T")?, log_y)
            } else {
                ("Thin torsion", "eps", "T/eps^2", table.series(None, "eps", "T_over_eps2")?, log_y)
            }
        }
        Kind::Perturb => ("Eigenvalue drop", "eps", "drop/eps^2", table.series(Some("n"), "eps", "drop_over_eps2")?, log_y),
    };
    render(title, xl, yl, &series, log)
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const L: f64 = 80.0;
const R: f64 = 130.0;
const T: f64 = 40.0;
const B: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{}", (v * 1e4).round() / 1e4)
    }
}

fn render(title: &str, xl: &str, yl: &str, series: &[Series], log_y: bool) -> Result<String, String> {
    let pts = || series.iter().flat_map(|s| s.points.iter().copied());
    if log_y {
        if let Some(p) = pts().find(|p| !(p.1 > 0.0)) {
            return Err(format!("log scale needs positive values, got {}", p.1));
        }
    }
    let ty = |y: f64| if log_y { y.log10() } else { y };
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(ty(y));
        y1 = y1.max(ty(y));
    }
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    if log_y {
        y0 = y0.floor();
        y1 = y1.ceil();
    } else {
        let pad = 0.05 * (y1 - y0);
        y0 -= pad;
        y1 += pad;
    }
    let sx = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let sy = |y: f64| H - B - (ty(y) - y0) / (y1 - y0) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>"#, (L + W - R) / 2.0);
    let _ = writeln!(s, r#"<g stroke="black" fill="none"><path d="M{L} {T} V{} H{}"/></g>"#, H - B, W - R);
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="11">"#);
    for i in 0..=5 {
        let x = x0 + (x1 - x0) * i as f64 / 5.0;
        let px = sx(x);
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/>"#, H - B, H - B + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, H - B + 18.0, label(x));
    }
    let yticks: Vec<f64> = if log_y {
        (y0 as i64..=y1 as i64).map(|e| 10f64.powi(e as i32)).collect()
    } else {
        (0..=5).map(|i| y0 + (y1 - y0) * i as f64 / 5.0).collect()
    };
    for y in yticks {
        let py = sy(y);
        let _ = writeln!(s, r#"<line x1="{}" y1="{py:.2}" x2="{L}" y2="{py:.2}" stroke="black"/>"#, L - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, L - 8.0, py + 4.0, label(y));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xl}</text>"#, (L + W - R) / 2.0, H - 12.0);
    let _ = writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{yl}{}</text>"#, (T + H - B) / 2.0, (T + H - B) / 2.0, if log_y { " (log)" } else { "" });
    let _ = writeln!(s, "</g>");
    for (i, ser) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let mut p = ser.points.clone();
        p.sort_by(|a, b| a.0.total_cmp(&b.0));
        let d: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, d.join(" "));
        for &(x, y) in &p {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, sx(x), sy(y));
        }
        if !ser.label.is_empty() {
            let ly = T + 16.0 * i as f64 + 10.0;
            let _ = writeln!(s, r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="11" fill="{c}">{}</text>"#, W - R + 10.0, ser.label);
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_is_log_scaled() {
        let csv = "R,A,S,paper_bound,pass\n3,1e-1,2e-1,5,true\n4,1e-2,2e-2,4.9,true\n";
        let svg = plot_csv(csv, Some(Kind::Decay), false).unwrap();
        assert!(svg.contains("(log)") && svg.contains("<polyline"));
        assert_eq!(svg, plot_csv(csv, None, false).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(plot_csv("", None, false).is_err());
        assert!(plot_csv("R,A,S,paper_bound,pass\n", None, false).is_err());
        assert!(plot_csv("a,b\n1,2\n", None, false).is_err());
        let ex = "R,h,j,lambda,residual,below_threshold,margin\n4,0.1,1,9.3,1e-9,true,0.5\n6,0.1,1,9.2,1e-9,true,0.6\n";
        assert!(plot_csv(ex, Some(Kind::Decay), false).is_err());
        assert!(plot_csv(ex, Some(Kind::Exhaust), false).unwrap().contains("j=1"));
    }
}
