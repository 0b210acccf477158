//! Minimal SVG documents: prediction overlays and bar charts.

use std::fmt::Write;

use anyhow::Result;
use base64::Engine;
use ceph_core::codec::LandmarkSet;
use ceph_core::data::GrayImage;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn png_data_uri(image: &GrayImage) -> Result<String> {
    let buf = image::GrayImage::from_raw(image.width as u32, image.height as u32, image.to_bytes())
        .expect("buffer matches dimensions");
    let mut png = Vec::new();
    buf.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)?;
    Ok(format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(png)))
}

/// The image with predicted points (filled) and, when given, ground-truth
/// points (rings) joined to their prediction by a yellow segment.
pub fn overlay(image: &GrayImage, pred: &LandmarkSet, truth: Option<&LandmarkSet>) -> Result<String> {
    let (w, h) = (image.width, image.height);
    let r = (w.max(h) as f64 / 128.0).max(1.0);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" width="{w}" height="{h}" viewBox="-0.5 -0.5 {w} {h}">"#
    )?;
    writeln!(
        s,
        r#"  <image x="-0.5" y="-0.5" width="{w}" height="{h}" image-rendering="pixelated" xlink:href="{}"/>"#,
        png_data_uri(image)?
    )?;
    if let Some(gt) = truth {
        for (j, (&[px, py], &[gx, gy])) in pred.points.iter().zip(&gt.points).enumerate() {
            if !gt.visible[j] {
                continue;
            }
            writeln!(
                s,
                r#"  <line x1="{gx:.3}" y1="{gy:.3}" x2="{px:.3}" y2="{py:.3}" stroke="yellow" stroke-width="{:.2}"/>"#,
                r * 0.5
            )?;
            writeln!(
                s,
                r#"  <circle cx="{gx:.3}" cy="{gy:.3}" r="{:.2}" fill="none" stroke="{}" stroke-width="{:.2}"><title>truth {j}</title></circle>"#,
                r * 2.5,
                PALETTE[j % PALETTE.len()],
                r * 0.5
            )?;
        }
    }
    for (j, &[x, y]) in pred.points.iter().enumerate() {
        writeln!(
            s,
            r#"  <circle cx="{x:.3}" cy="{y:.3}" r="{r:.2}" fill="{}"><title>prediction {j}</title></circle>"#,
            PALETTE[j % PALETTE.len()]
        )?;
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// One bar group per category, one bar per series.
pub struct BarChart<'a> {
    pub title: &'a str,
    pub y_label: &'a str,
    pub categories: Vec<String>,
    pub series: Vec<(String, Vec<f64>)>,
}

impl BarChart<'_> {
    pub fn render(&self) -> String {
        let (width, height) = (640.0, 400.0);
        let (left, right, top, bottom) = (64.0, 140.0, 40.0, 48.0);
        let plot_w = width - left - right;
        let plot_h = height - top - bottom;
        let y_max = self
            .series
            .iter()
            .flat_map(|(_, v)| v.iter().copied())
            .fold(0.0f64, f64::max)
            .max(1e-12)
            * 1.1;
        let groups = self.categories.len().max(1) as f64;
        let group_w = plot_w / groups;
        let bar_w = group_w * 0.8 / self.series.len().max(1) as f64;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"  <text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, width / 2.0, escape(self.title));
        let _ = writeln!(
            s,
            r#"  <line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#,
            top + plot_h
        );
        let _ = writeln!(
            s,
            r#"  <line x1="{left}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
            left + plot_w,
            y0 = top + plot_h
        );
        for k in 0..=4 {
            let v = y_max * k as f64 / 4.0;
            let y = top + plot_h - plot_h * k as f64 / 4.0;
            let _ = writeln!(s, r#"  <text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, left - 6.0, y + 4.0);
        }
        let _ = writeln!(
            s,
            r#"  <text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">{}</text>"#,
            top + plot_h / 2.0,
            top + plot_h / 2.0,
            escape(self.y_label)
        );
        for (ci, cat) in self.categories.iter().enumerate() {
            let gx = left + group_w * ci as f64 + group_w * 0.1;
            for (si, (name, values)) in self.series.iter().enumerate() {
                let v = values.get(ci).copied().unwrap_or(0.0);
                let bh = plot_h * v / y_max;
                let _ = writeln!(
                    s,
                    r#"  <rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{}: {v:.4}</title></rect>"#,
                    gx + bar_w * si as f64,
                    top + plot_h - bh,
                    bar_w,
                    bh,
                    PALETTE[si % PALETTE.len()],
                    escape(name)
                );
            }
            let _ = writeln!(
                s,
                r#"  <text x="{:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
                left + group_w * (ci as f64 + 0.5),
                top + plot_h + 18.0,
                escape(cat)
            );
        }
        for (si, (name, _)) in self.series.iter().enumerate() {
            let y = top + 18.0 * si as f64;
            let x = width - right + 16.0;
            let _ = writeln!(
                s,
                r#"  <rect x="{x}" y="{y}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
                PALETTE[si % PALETTE.len()],
                x + 18.0,
                y + 10.0,
                escape(name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
