//! Static SVG rendering for loss curves, the α/β grid panels, and the
//! confusion matrix. No rendering dependency; the CSV/JSON artifacts stay
//! the source of truth and these are convenience views over them.

use crate::train::{GridResult, StepLog};

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let coords: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

/// One chart with the four loss components over steps.
pub fn loss_svg(steps: &[StepLog]) -> String {
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if steps.is_empty() {
        svg.push_str("<text x=\"20\" y=\"20\">no steps logged</text>\n</svg>\n");
        return svg;
    }
    let series: [(&str, &str, Box<dyn Fn(&StepLog) -> f64>); 4] = [
        ("cls", "#d62728", Box::new(|s: &StepLog| s.cls)),
        ("disc", "#1f77b4", Box::new(|s: &StepLog| s.disc)),
        ("excl", "#2ca02c", Box::new(|s: &StepLog| s.excl)),
        ("total", "#000000", Box::new(|s: &StepLog| s.total)),
    ];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, _, f) in &series {
        for s in steps {
            let v = f(s);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let x_of = |i: usize| MARGIN + (W - 2.0 * MARGIN) * i as f64 / (steps.len().max(2) - 1) as f64;
    let y_of = |v: f64| H - MARGIN - (H - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#888\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"#888\"/>\n",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    ));
    for (idx, (name, color, f)) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = steps.iter().enumerate().map(|(i, s)| (x_of(i), y_of(f(s)))).collect();
        svg.push_str(&polyline(&pts, color));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\" font-size=\"12\">{name}</text>\n",
            W - MARGIN + 4.0,
            MARGIN + 14.0 * idx as f64
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">steps: {}  range: [{:.3}, {:.3}]</text>\n",
        MARGIN,
        H - MARGIN + 30.0,
        steps.len(),
        lo,
        hi
    ));
    svg.push_str("</svg>\n");
    svg
}

fn heat_color(v: f64) -> String {
    // White → steel blue.
    let t = v.clamp(0.0, 1.0);
    let r = (255.0 - t * 185.0) as u8;
    let g = (255.0 - t * 125.0) as u8;
    let b = (255.0 - t * 75.0) as u8;
    format!("rgb({r},{g},{b})")
}

/// Three heatmap panels (classification, detection, mean) over the
/// partially filled 8×8 α/β grid.
pub fn grid_svg(grid: &GridResult) -> String {
    let cell = 34.0;
    let panel_w = cell * 8.0 + 70.0;
    let total_w = panel_w * 3.0;
    let total_h = cell * 8.0 + 90.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total_w}\" height=\"{total_h}\" viewBox=\"0 0 {total_w} {total_h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let panels: [(&str, Box<dyn Fn(&crate::train::GridCell) -> f64>); 3] = [
        ("classification", Box::new(|c: &crate::train::GridCell| c.cls_acc)),
        ("detection", Box::new(|c: &crate::train::GridCell| c.det_acc)),
        ("mean", Box::new(|c: &crate::train::GridCell| c.mean)),
    ];
    for (p, (title, f)) in panels.iter().enumerate() {
        let x0 = p as f64 * panel_w + 50.0;
        let y0 = 40.0;
        svg.push_str(&format!(
            "<text x=\"{x0}\" y=\"20\" font-size=\"14\">{title}</text>\n"
        ));
        for c in &grid.cells {
            let col = (c.beta * 10.0).round() as usize - 1;
            let row = (c.alpha * 10.0).round() as usize - 1;
            let v = f(c);
            let x = x0 + col as f64 * cell;
            let y = y0 + row as f64 * cell;
            svg.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{}\" stroke=\"#ccc\"/>\n",
                heat_color(v)
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"middle\">{:.2}</text>\n",
                x + cell / 2.0,
                y + cell / 2.0 + 3.0,
                v
            ));
        }
        for i in 0..8 {
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{:.1}</text>\n",
                x0 + i as f64 * cell + cell / 2.0,
                y0 + 8.0 * cell + 14.0,
                (i + 1) as f64 / 10.0
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{:.1}</text>\n",
                x0 - 4.0,
                y0 + i as f64 * cell + cell / 2.0 + 3.0,
                (i + 1) as f64 / 10.0
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">β →, α ↓</text>\n",
            x0,
            y0 + 8.0 * cell + 34.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Confusion-matrix heatmap, columns normalized per ground-truth family.
pub fn confusion_svg(confusion: &[Vec<u64>], names: &[String]) -> String {
    let k = confusion.len();
    let cell = (420.0 / k.max(1) as f64).min(40.0);
    let w = cell * k as f64 + 120.0;
    let h = cell * k as f64 + 120.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let mut col_sums = vec![0.0; k];
    for row in confusion {
        for (j, &v) in row.iter().enumerate() {
            col_sums[j] += v as f64;
        }
    }
    for (i, row) in confusion.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let frac = if col_sums[j] > 0.0 { v as f64 / col_sums[j] } else { 0.0 };
            let x = 100.0 + j as f64 * cell;
            let y = 20.0 + i as f64 * cell;
            svg.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{}\" stroke=\"#eee\"/>\n",
                heat_color(frac)
            ));
        }
    }
    for (i, name) in names.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"96\" y=\"{}\" font-size=\"9\" text-anchor=\"end\">{name}</text>\n",
            20.0 + i as f64 * cell + cell / 2.0 + 3.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"9\" transform=\"rotate(45 {x} {y})\" >{name}</text>\n",
            100.0 + i as f64 * cell + cell / 2.0,
            26.0 + k as f64 * cell,
            x = 100.0 + i as f64 * cell + cell / 2.0,
            y = 26.0 + k as f64 * cell,
        ));
    }
    svg.push_str(&format!(
        "<text x=\"10\" y=\"{}\" font-size=\"11\">rows: predicted, columns: ground truth</text>\n",
        h - 8.0
    ));
    svg.push_str("</svg>\n");
    svg
}
