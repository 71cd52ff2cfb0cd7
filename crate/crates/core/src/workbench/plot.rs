use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::Result;
use crate::solver::FieldMap;

/// Pixels per grid cell in rendered images.
pub const CELL_PIXELS: u32 = 4;
const GAP: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FieldView {
    /// `Re H_y` on a symmetric diverging scale.
    #[default]
    Real,
    /// `|H_y|` on a sequential scale.
    Magnitude,
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn rgb(c: [f64; 3]) -> Rgb<u8> {
    Rgb(c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
}

/// Blue, white, red over `[-1, 1]`.
fn diverging(t: f64) -> Rgb<u8> {
    const BLUE: [f64; 3] = [0.23, 0.30, 0.75];
    const WHITE: [f64; 3] = [0.97, 0.97, 0.97];
    const RED: [f64; 3] = [0.71, 0.02, 0.15];
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    if t < 0.0 {
        rgb(lerp(WHITE, BLUE, -t))
    } else {
        rgb(lerp(WHITE, RED, t))
    }
}

/// Black, purple, orange, pale yellow over `[0, 1]`.
fn sequential(t: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 4] = [[0.0, 0.0, 0.02], [0.45, 0.12, 0.51], [0.94, 0.38, 0.20], [0.99, 0.99, 0.75]];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 } * 3.0;
    let k = (t.floor() as usize).min(2);
    rgb(lerp(STOPS[k], STOPS[k + 1], t - k as f64))
}

fn paint(img: &mut RgbImage, x0: u32, rows: usize, cols: usize, color: impl Fn(usize, usize) -> Rgb<u8>) {
    for i in 0..rows {
        for j in 0..cols {
            let c = color(i, j);
            for dy in 0..CELL_PIXELS {
                for dx in 0..CELL_PIXELS {
                    img.put_pixel(x0 + j as u32 * CELL_PIXELS + dx, i as u32 * CELL_PIXELS + dy, c);
                }
            }
        }
    }
}

fn scale_of(values: impl Iterator<Item = f64>) -> f64 {
    let m = values.fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Rows run down the image, columns (propagation) across.
pub fn render_field(field: &FieldMap, view: FieldView) -> RgbImage {
    let d = field.domain;
    let mut img = RgbImage::new(d.cols as u32 * CELL_PIXELS, d.rows as u32 * CELL_PIXELS);
    match view {
        FieldView::Real => {
            let s = scale_of(field.values.iter().map(|v| v.re));
            paint(&mut img, 0, d.rows, d.cols, |i, j| diverging(field.at(i, j).re / s));
        }
        FieldView::Magnitude => {
            let s = scale_of(field.values.iter().map(|v| v.norm()));
            paint(&mut img, 0, d.rows, d.cols, |i, j| sequential(field.at(i, j).norm() / s));
        }
    }
    img
}

/// Side-by-side panels: `Re` target, `Re` prediction, `Re` error and
/// `|target|`. Target and prediction share one symmetric scale; the error
/// panel has its own.
pub fn render_comparison(pred: &FieldMap, truth: &FieldMap) -> RgbImage {
    let d = truth.domain;
    let w = d.cols as u32 * CELL_PIXELS;
    let mut img = RgbImage::from_pixel(4 * w + 3 * GAP, d.rows as u32 * CELL_PIXELS, Rgb([255, 255, 255]));
    let s = scale_of(truth.values.iter().chain(&pred.values).map(|v| v.re));
    let se = scale_of(pred.values.iter().zip(&truth.values).map(|(p, t)| (p - t).re));
    let sm = scale_of(truth.values.iter().map(|v| v.norm()));
    paint(&mut img, 0, d.rows, d.cols, |i, j| diverging(truth.at(i, j).re / s));
    paint(&mut img, w + GAP, d.rows, d.cols, |i, j| diverging(pred.at(i, j).re / s));
    paint(&mut img, 2 * (w + GAP), d.rows, d.cols, |i, j| diverging((pred.at(i, j) - truth.at(i, j)).re / se));
    paint(&mut img, 3 * (w + GAP), d.rows, d.cols, |i, j| sequential(truth.at(i, j).norm() / sm));
    img
}

pub fn plot_field(path: &Path, field: &FieldMap, view: FieldView) -> Result<()> {
    render_field(field, view).save(path)?;
    Ok(())
}

pub fn plot_comparison(path: &Path, pred: &FieldMap, truth: &FieldMap) -> Result<()> {
    render_comparison(pred, truth).save(path)?;
    Ok(())
}
