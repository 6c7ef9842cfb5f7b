//! Minimal SVG line and contour rendering: diagnostic figures only, the
//! CSVs are the contract.

/// One named series of (x, y) points.
pub struct Series<'a> {
    pub name: &'a str,
    pub points: &'a [(f64, f64)],
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#2a6fb0", "#3fa34d", "#c05050", "#9058b0", "#c08a30", "#508a8a"];

fn finite_bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Line chart; `log_y` plots log10 of positive y values.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_y: bool) -> String {
    let map_y = |y: f64| if log_y { (y.max(1e-300)).log10() } else { y };
    let (x_lo, x_hi) = finite_bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y_lo, y_hi) = finite_bounds(series.iter().flat_map(|s| s.points.iter().map(|p| map_y(p.1))));
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (map_y(y) - y_lo) / (y_hi - y_lo) * (H - 2.0 * MARGIN);

    let mut out = svg_header(title);
    axes(&mut out, x_label, &format!("{}{}", if log_y { "log10 " } else { "" }, y_label));
    for (k, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
            .collect();
        let color = COLORS[k % COLORS.len()];
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{:.0}\" y=\"{:.0}\" fill=\"{color}\" font-size=\"12\">{}</text>\n",
            W - MARGIN - 120.0,
            MARGIN + 16.0 * (k as f64 + 1.0),
            xml_escape(s.name)
        ));
    }
    annotate_range(&mut out, x_lo, x_hi, y_lo, y_hi);
    out.push_str("</svg>\n");
    out
}

/// Contour chart of `values[i][j]` at grid points `(xs[i], ys[j])` via
/// marching squares at evenly spaced levels.
pub fn contour_chart(title: &str, xs: &[f64], ys: &[f64], values: &[Vec<f64>], levels: usize) -> String {
    let (x_lo, x_hi) = finite_bounds(xs.iter().cloned());
    let (y_lo, y_hi) = finite_bounds(ys.iter().cloned());
    let (v_lo, v_hi) = finite_bounds(values.iter().flat_map(|r| r.iter().cloned()));
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y_lo) / (y_hi - y_lo) * (H - 2.0 * MARGIN);

    let mut out = svg_header(title);
    axes(&mut out, "theta 1", "theta 2");
    for li in 1..=levels {
        let level = v_lo + (v_hi - v_lo) * li as f64 / (levels + 1) as f64;
        let color = COLORS[li % COLORS.len()];
        let mut segs = String::new();
        for i in 0..xs.len() - 1 {
            for j in 0..ys.len() - 1 {
                let corners = [
                    (xs[i], ys[j], values[i][j]),
                    (xs[i + 1], ys[j], values[i + 1][j]),
                    (xs[i + 1], ys[j + 1], values[i + 1][j + 1]),
                    (xs[i], ys[j + 1], values[i][j + 1]),
                ];
                if corners.iter().any(|c| !c.2.is_finite()) {
                    continue;
                }
                // Interpolated crossings on each edge of the cell.
                let mut pts = Vec::new();
                for e in 0..4 {
                    let (x0, y0, v0) = corners[e];
                    let (x1, y1, v1) = corners[(e + 1) % 4];
                    if (v0 < level) != (v1 < level) {
                        let t = (level - v0) / (v1 - v0);
                        pts.push((x0 + t * (x1 - x0), y0 + t * (y1 - y0)));
                    }
                }
                if pts.len() >= 2 {
                    segs.push_str(&format!(
                        "M{:.2} {:.2} L{:.2} {:.2} ",
                        sx(pts[0].0),
                        sy(pts[0].1),
                        sx(pts[1].0),
                        sy(pts[1].1)
                    ));
                }
            }
        }
        out.push_str(&format!(
            "<path fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" d=\"{segs}\"/>\n"
        ));
    }
    annotate_range(&mut out, x_lo, x_hi, y_lo, y_hi);
    out.push_str("</svg>\n");
    out
}

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.0}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        xml_escape(title)
    )
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    out.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx:.0}\" y=\"{ly:.0}\" font-size=\"12\" text-anchor=\"middle\">{xl}</text>\n\
         <text x=\"14\" y=\"{cy:.0}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {cy:.0})\">{yl}</text>\n",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN,
        cx = W / 2.0,
        ly = H - 12.0,
        cy = H / 2.0,
        xl = xml_escape(x_label),
        yl = xml_escape(y_label),
    ));
}

fn annotate_range(out: &mut String, x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) {
    out.push_str(&format!(
        "<text x=\"{m}\" y=\"{by:.0}\" font-size=\"10\">{x_lo:.4}</text>\n\
         <text x=\"{rx:.0}\" y=\"{by:.0}\" font-size=\"10\" text-anchor=\"end\">{x_hi:.4}</text>\n\
         <text x=\"{m}\" y=\"{ty:.0}\" font-size=\"10\">{y_hi:.4}</text>\n\
         <text x=\"{m}\" y=\"{cy:.0}\" font-size=\"10\">{y_lo:.4}</text>\n",
        m = MARGIN,
        by = H - MARGIN + 14.0,
        rx = W - MARGIN,
        ty = MARGIN - 6.0,
        cy = H - MARGIN - 4.0,
    ));
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_wellformed() {
        let pts = [(0.0, 1.0), (1.0, 0.1), (2.0, 0.01)];
        let svg = line_chart("conv", "iter", "gap", &[Series { name: "ip", points: &pts }], true);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<polyline"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn contour_chart_emits_paths() {
        let xs: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let ys = xs.clone();
        let vals: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| ys.iter().map(|&y| (x - 0.5f64).powi(2) + (y - 0.5f64).powi(2)).collect())
            .collect();
        let svg = contour_chart("bowl", &xs, &ys, &vals, 6);
        assert!(svg.contains("<path"));
        assert!(svg.contains('M'));
    }
}
