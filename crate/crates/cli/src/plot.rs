//! Minimal SVG line charts for loss curves and forecast overlays.

use solartformer::train::EpochLog;
use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// One forecast day read back from a predictions CSV.
#[derive(Debug, PartialEq)]
pub struct DayForecast {
    pub station: String,
    pub date: String,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in series.iter().flat_map(|s| &s.points) {
        b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
    }
    if !b.0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if b.1 <= b.0 {
        b.1 = b.0 + 1.0;
    }
    if b.3 <= b.2 {
        b.3 = b.2 + 1.0;
    }
    b
}

/// Renders the series as polylines. Each polyline carries its point count
/// in `data-points`. `stamp`, when given, is embedded as a comment.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], stamp: Option<&str>) -> String {
    let (x0, x1, y0, y1) = bounds(series);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    if let Some(t) = stamp {
        let _ = writeln!(s, "<!-- generated {t} -->");
    }
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>"#, WIDTH / 2.0);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" stroke="black" fill="none"/>"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="{}" font-size="11">{x0:.4}</text>"#, bottom + 16.0);
    let _ = writeln!(s, r#"<text x="{right}" y="{}" font-size="11" text-anchor="end">{x1:.4}</text>"#, bottom + 16.0);
    let _ = writeln!(s, r#"<text x="4" y="{bottom}" font-size="11">{y0:.4}</text>"#);
    let _ = writeln!(s, r#"<text x="4" y="{}" font-size="11">{y1:.4}</text>"#, top - 6.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{x_label}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline data-series="{}" data-points="{}" points="{}" stroke="{}" fill="none" stroke-width="1.5"/>"#,
            ser.name,
            ser.points.len(),
            pts.join(" "),
            ser.color
        );
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-size="12" fill="{}" text-anchor="end">{}</text>"#,
            right,
            ser.color,
            ser.name
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn loss_svg(curve: &[EpochLog], stamp: Option<&str>) -> String {
    let mut series = vec![Series {
        name: "train",
        color: "#1f77b4",
        points: curve.iter().map(|e| (e.epoch as f64, e.train_mse)).collect(),
    }];
    let val: Vec<(f64, f64)> = curve.iter().filter_map(|e| e.val_mse.map(|v| (e.epoch as f64, v))).collect();
    if !val.is_empty() {
        series.push(Series { name: "test", color: "#d62728", points: val });
    }
    line_chart("Loss curve", "epoch", "MSE", &series, stamp)
}

pub fn overlay_svg(day: &DayForecast, stamp: Option<&str>) -> String {
    let pts = |v: &[f64]| v.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
    let series = [
        Series { name: "actual", color: "#222222", points: pts(&day.actual) },
        Series { name: "predicted", color: "#ff7f0e", points: pts(&day.predicted) },
    ];
    let title = format!("{} {}", day.station, day.date);
    line_chart(&title, "slot (15 min)", "power per panel", &series, stamp)
}

pub fn overlay_csv(day: &DayForecast) -> String {
    let mut s = String::from("slot,actual,predicted\n");
    for (i, (a, p)) in day.actual.iter().zip(&day.predicted).enumerate() {
        let _ = writeln!(s, "{i},{a},{p}");
    }
    s
}

/// Groups a long-format predictions CSV back into days, in sample order.
pub fn parse_predictions(text: &str) -> Result<Vec<DayForecast>, String> {
    let mut lines = text.lines();
    if lines.next() != Some("sample,station,date,slot,actual,predicted") {
        return Err("not a predictions table: unexpected header".into());
    }
    let mut days: Vec<DayForecast> = Vec::new();
    for (n, line) in lines.enumerate() {
        let bad = || format!("predictions line {}: {line:?}", n + 2);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let sample: usize = f[0].parse().map_err(|_| bad())?;
        let actual: f64 = f[4].parse().map_err(|_| bad())?;
        let predicted: f64 = f[5].parse().map_err(|_| bad())?;
        if sample == days.len() {
            days.push(DayForecast {
                station: f[1].to_string(),
                date: f[2].to_string(),
                actual: vec![],
                predicted: vec![],
            });
        } else if sample + 1 != days.len() {
            return Err(bad());
        }
        let d = days.last_mut().expect("pushed above");
        d.actual.push(actual);
        d.predicted.push(predicted);
    }
    Ok(days)
}
