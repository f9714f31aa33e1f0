//! Minimal native SVG emission for experiment plots. CSV stays the
//! canonical output; these are quick-look renderings with no external
//! plotting dependency.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

pub struct Plot {
    title: String,
    x_label: String,
    y_label: String,
    x_range: (f64, f64),
    y_range: (f64, f64),
    body: String,
    legend: Vec<(String, String)>,
}

fn fmt(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e9 {
        format!("{}", v as i64)
    } else {
        format!("{:.3}", v)
    }
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            x_range: (0.0, 1.0),
            y_range: (0.0, 1.0),
            body: String::new(),
            legend: Vec::new(),
        }
    }

    /// Fixes the data ranges; call before adding series.
    pub fn with_ranges(mut self, x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(lo, hi): (f64, f64)| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, lo + 0.5)
            }
        };
        self.x_range = pad(x);
        self.y_range = pad(y);
        self
    }

    fn x_pix(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range;
        MARGIN_L + (x - lo) / (hi - lo) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y_pix(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        HEIGHT - MARGIN_B - (y - lo) / (hi - lo) * (HEIGHT - MARGIN_T - MARGIN_B)
    }

    /// Circle markers.
    pub fn circles(&mut self, points: &[(f64, f64)], color: &str, label: &str) {
        for &(x, y) in points {
            self.body.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                self.x_pix(x),
                self.y_pix(y)
            ));
        }
        self.legend.push((label.to_string(), color.to_string()));
    }

    /// Plus-sign markers.
    pub fn plusses(&mut self, points: &[(f64, f64)], color: &str, label: &str) {
        for &(x, y) in points {
            let (px, py) = (self.x_pix(x), self.y_pix(y));
            self.body.push_str(&format!(
                "<path d=\"M {:.1} {:.1} h 8 M {:.1} {:.1} v 8\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                px - 4.0,
                py,
                px,
                py - 4.0
            ));
        }
        self.legend.push((label.to_string(), color.to_string()));
    }

    /// A polyline through the points, in the given order.
    pub fn line(&mut self, points: &[(f64, f64)], color: &str, dashed: bool, label: &str) {
        if points.is_empty() {
            return;
        }
        let mut d = String::new();
        for (i, &(x, y)) in points.iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            d.push_str(&format!("{cmd} {:.1} {:.1} ", self.x_pix(x), self.y_pix(y)));
        }
        let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        self.body.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"{dash}/>\n",
            d.trim_end()
        ));
        self.legend.push((label.to_string(), color.to_string()));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        ));
        out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
            WIDTH / 2.0,
            self.title
        ));

        // Axes with five ticks each.
        let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
        let (y0, y1) = (HEIGHT - MARGIN_B, MARGIN_T);
        out.push_str(&format!(
            "<path d=\"M {x0} {y1} L {x0} {y0} L {x1} {y0}\" fill=\"none\" stroke=\"black\"/>\n"
        ));
        for i in 0..=4 {
            let f = f64::from(i) / 4.0;
            let xv = self.x_range.0 + f * (self.x_range.1 - self.x_range.0);
            let yv = self.y_range.0 + f * (self.y_range.1 - self.y_range.0);
            let xp = self.x_pix(xv);
            let yp = self.y_pix(yv);
            out.push_str(&format!(
                "<path d=\"M {xp:.1} {y0} v 5\" stroke=\"black\"/>\n<text x=\"{xp:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                y0 + 18.0,
                fmt(xv)
            ));
            out.push_str(&format!(
                "<path d=\"M {x0} {yp:.1} h -5\" stroke=\"black\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                x0 - 8.0,
                yp + 4.0,
                fmt(yv)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
            (x0 + x1) / 2.0,
            HEIGHT - 12.0,
            self.x_label
        ));
        out.push_str(&format!(
            "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            self.y_label
        ));

        out.push_str(&self.body);

        for (i, (label, color)) in self.legend.iter().enumerate() {
            let y = MARGIN_T + 14.0 + 18.0 * i as f64;
            out.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{label}</text>\n",
                x1 - 150.0,
                y - 10.0,
                x1 - 132.0,
                y
            ));
        }
        out.push_str("</svg>\n");
        out
    }
}
