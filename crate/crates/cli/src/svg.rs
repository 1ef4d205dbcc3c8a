//! Static SVG figures: the correlation heatmap and per-patient seed
//! distributions.

use onconet::engine::Matrix;

const CELL: f64 = 56.0;
const MARGIN: f64 = 110.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Diverging blue–white–red fill for a correlation in [-1, 1].
fn fill(r: f64) -> String {
    let t = r.clamp(-1.0, 1.0);
    let (red, green, blue) = if t >= 0.0 {
        (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
    } else {
        (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", red as u8, green as u8, blue as u8)
}

/// One `rect.cell` per ordered model pair, annotated with the coefficient.
pub fn heatmap(models: &[String], pcc: &Matrix) -> String {
    let k = models.len();
    let size = MARGIN + CELL * k as f64 + 20.0;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" \
         viewBox=\"0 0 {size} {size}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    out += "<title>Pearson correlation of median test predictions</title>\n";
    for (i, m) in models.iter().enumerate() {
        let c = MARGIN + CELL * (i as f64 + 0.5);
        out += &format!(
            "<text x=\"{:.1}\" y=\"{c:.1}\" text-anchor=\"end\" dominant-baseline=\"middle\">{}</text>\n",
            MARGIN - 8.0,
            escape(m)
        );
        out += &format!(
            "<text x=\"{c:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            MARGIN - 10.0,
            escape(m)
        );
    }
    for i in 0..k {
        for j in 0..k {
            let r = pcc.get(i, j);
            let (x, y) = (MARGIN + CELL * j as f64, MARGIN + CELL * i as f64);
            out += &format!(
                "<rect class=\"cell\" x=\"{x:.1}\" y=\"{y:.1}\" width=\"{CELL}\" height=\"{CELL}\" \
                 fill=\"{}\" stroke=\"#444\" data-row=\"{}\" data-col=\"{}\"/>\n",
                fill(r),
                escape(&models[i]),
                escape(&models[j])
            );
            out += &format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" dominant-baseline=\"middle\">{r:.3}</text>\n",
                x + CELL / 2.0,
                y + CELL / 2.0
            );
        }
    }
    out + "</svg>\n"
}

/// Strip plot of one patient's per-seed probabilities under two models.
pub fn distribution(patient: &str, a: (&str, &[f64]), b: (&str, &[f64])) -> String {
    let (w, h, left, right) = (520.0, 170.0, 90.0, 20.0);
    let span = w - left - right;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    out += &format!("<title>Seed predictions for {}</title>\n", escape(patient));
    out += &format!("<text x=\"{left}\" y=\"18\">patient {}</text>\n", escape(patient));
    let axis_y = h - 30.0;
    out += &format!(
        "<line x1=\"{left}\" y1=\"{axis_y}\" x2=\"{}\" y2=\"{axis_y}\" stroke=\"#000\"/>\n",
        left + span
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let x = left + span * v;
        out += &format!(
            "<line x1=\"{x:.1}\" y1=\"{axis_y}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#000\"/>\
             <text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{v:.2}</text>\n",
            axis_y + 5.0,
            axis_y + 18.0
        );
    }
    for (row, ((name, values), colour)) in [a, b].into_iter().zip(["#1f77b4", "#ff7f0e"]).enumerate() {
        let y = 50.0 + 45.0 * row as f64;
        out += &format!(
            "<text x=\"{:.1}\" y=\"{y:.1}\" text-anchor=\"end\" dominant-baseline=\"middle\">{}</text>\n",
            left - 8.0,
            escape(name)
        );
        for &p in values {
            out += &format!(
                "<circle class=\"seed\" cx=\"{:.2}\" cy=\"{y:.1}\" r=\"4\" fill=\"{colour}\" fill-opacity=\"0.5\"/>\n",
                left + span * p.clamp(0.0, 1.0)
            );
        }
    }
    out + "</svg>\n"
}
