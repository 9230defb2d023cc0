//! Static line plots of CSV columns against the first column.

use std::path::Path;
use std::sync::OnceLock;

use plotters::prelude::*;

use crate::error::{format_err, Error, Result};
use crate::fsutil::{atomic_write, read_to_string};

const FONT_CANDIDATES: &[&str] = &[
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/TTF/DejaVuSans.ttf",
    "/System/Library/Fonts/Supplemental/Arial.ttf",
    "C:\\Windows\\Fonts\\arial.ttf",
];

/// Registers a system font once; plots are drawn without text if none is found.
fn font_available() -> bool {
    static FONT: OnceLock<bool> = OnceLock::new();
    *FONT.get_or_init(|| {
        let path = std::env::var("INTERESTYLE_FONT").ok();
        let candidates = path.iter().map(String::as_str).chain(FONT_CANDIDATES.iter().copied());
        for p in candidates {
            if let Ok(bytes) = std::fs::read(p) {
                let bytes: &'static [u8] = Box::leak(bytes.into_boxed_slice());
                if plotters::style::register_font("sans-serif", FontStyle::Normal, bytes).is_ok() {
                    return true;
                }
            }
        }
        log::warn!("no usable font found; plots will have no labels");
        false
    })
}

/// Parsed CSV: header names and rows of numbers (non-numeric columns dropped).
pub struct Table {
    pub x_name: String,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

pub fn parse_csv(text: &str, origin: &Path) -> Result<Table> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| format_err(origin, "empty CSV"))?
        .split(',')
        .map(str::trim)
        .collect();
    if header.len() < 2 {
        return Err(format_err(origin, "CSV needs at least two columns"));
    }
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); header.len()];
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(format_err(origin, format!("row {} has {} cells, header has {}", n + 2, cells.len(), header.len())));
        }
        for (c, cell) in cells.iter().enumerate() {
            cols[c].push(cell.trim().parse().ok());
        }
    }
    if cols[0].is_empty() {
        return Err(format_err(origin, "CSV has a header but no rows"));
    }
    if cols[0].iter().any(Option::is_none) {
        return Err(format_err(origin, "first column must be numeric"));
    }
    let xs: Vec<f64> = cols[0].iter().map(|v| v.unwrap()).collect();
    let series: Vec<(String, Vec<(f64, f64)>)> = (1..header.len())
        .filter(|&c| cols[c].iter().all(Option::is_some))
        .map(|c| {
            let pts = xs.iter().zip(&cols[c]).map(|(&x, y)| (x, y.unwrap())).collect();
            (header[c].to_string(), pts)
        })
        .collect();
    if series.is_empty() {
        return Err(format_err(origin, "no numeric data columns"));
    }
    Ok(Table {
        x_name: header[0].to_string(),
        series,
    })
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn draw_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::Invalid(format!("plot rendering failed: {e:?}"))
}

/// Renders `table` as a `width x height` RGB buffer.
pub fn render(table: &Table, title: &str, width: u32, height: u32) -> Result<Vec<u8>> {
    let text = font_available();
    let mut buf = vec![0u8; (width * height * 3) as usize];
    {
        let root = BitMapBackend::with_buffer(&mut buf, (width, height)).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        let x = bounds(table.series[0].1.iter().map(|p| p.0));
        let y = bounds(table.series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
        let mut builder = ChartBuilder::on(&root);
        builder.margin(12);
        if text {
            builder.caption(title, ("sans-serif", 20)).x_label_area_size(36).y_label_area_size(64);
        }
        let mut chart = builder.build_cartesian_2d(x.0..x.1, y.0..y.1).map_err(draw_err)?;
        let mut mesh = chart.configure_mesh();
        if text {
            mesh.x_desc(table.x_name.as_str());
        } else {
            mesh.disable_x_axis().disable_y_axis();
        }
        mesh.draw().map_err(draw_err)?;
        for (k, (name, pts)) in table.series.iter().enumerate() {
            let color = Palette99::pick(k).to_rgba();
            let s = chart.draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2))).map_err(draw_err)?;
            if text {
                s.label(name.as_str())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
            }
        }
        if text {
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(draw_err)?;
        }
        root.present().map_err(draw_err)?;
    }
    Ok(buf)
}

/// Plots every numeric column of `csv_in` against its first column.
pub fn plot_csv(csv_in: &Path, png_out: &Path) -> Result<()> {
    let table = parse_csv(&read_to_string(csv_in)?, csv_in)?;
    let title = csv_in.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let (w, h) = (800, 500);
    let buf = render(&table, title, w, h)?;
    let img = image::RgbImage::from_raw(w, h, buf).expect("buffer matches size");
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).map_err(|source| Error::Image {
        path: png_out.to_path_buf(),
        source,
    })?;
    atomic_write(png_out, &out.into_inner())
}
