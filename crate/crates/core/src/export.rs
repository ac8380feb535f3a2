//! Raster writers: NPY for numeric arrays, PGM and SVG for heatmaps.

use std::io::Write;

use crate::grid::{Field, Mask};

/// NumPy `.npy` v1.0, little-endian `f64`, C order, shape `(h, w)`.
pub fn write_npy<W: Write>(field: &Field, mut out: W) -> std::io::Result<()> {
    let mut header = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}), }}",
        field.height(),
        field.width()
    );
    // Magic (6) + version (2) + length (2) + header + '\n' is a multiple of 64.
    let unpadded = 10 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');
    out.write_all(b"\x93NUMPY\x01\x00")?;
    out.write_all(&(header.len() as u16).to_le_bytes())?;
    out.write_all(header.as_bytes())?;
    for v in field.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn gray_levels(field: &Field) -> Vec<u8> {
    let max = field.max_value();
    field
        .data()
        .iter()
        .map(|&v| {
            if max > 0.0 {
                ((v / max).clamp(0.0, 1.0) * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect()
}

/// Binary PGM (P5) scaled so the maximum maps to 255. Row 0 of the grid
/// (smallest `y`) is written last so the image reads with `y` up.
pub fn write_pgm<W: Write>(field: &Field, mut out: W) -> std::io::Result<()> {
    let (h, w) = (field.height(), field.width());
    write!(out, "P5\n{w} {h}\n255\n")?;
    let levels = gray_levels(field);
    for r in (0..h).rev() {
        out.write_all(&levels[r * w..(r + 1) * w])?;
    }
    Ok(())
}

pub fn mask_to_field(mask: &Mask) -> Field {
    Field::from_vec(
        mask.height(),
        mask.width(),
        mask.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    )
    .expect("same shape")
}

/// SVG heatmap with one rect per nonzero cell plus optional camera markers
/// given in cell units.
pub fn write_svg<W: Write>(field: &Field, cameras: &[(String, [f64; 2])], mut out: W) -> std::io::Result<()> {
    let (h, w) = (field.height(), field.width());
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" width="{}" height="{}">"#,
        w * 4,
        h * 4
    )?;
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="black"/>"#)?;
    let levels = gray_levels(field);
    for r in 0..h {
        for c in 0..w {
            let g = levels[r * w + c];
            if g > 0 {
                writeln!(
                    out,
                    r#"<rect x="{c}" y="{}" width="1" height="1" fill="rgb({g},{g},{g})"/>"#,
                    h - 1 - r
                )?;
            }
        }
    }
    for (id, [x, y]) in cameras {
        writeln!(
            out,
            r#"<circle cx="{x:.3}" cy="{:.3}" r="1" fill="red"><title>{id}</title></circle>"#,
            h as f64 - y
        )?;
    }
    writeln!(out, "</svg>")?;
    Ok(())
}
