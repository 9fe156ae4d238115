use std::io::Cursor;
use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::masks::LabelMask;
use crate::{Error, Result};

/// Colours of the 20 fine labels; also used for coarse and binary maps.
pub const LABEL_PALETTE: [[u8; 3]; 20] = [
    [0, 0, 0],
    [128, 0, 0],
    [255, 0, 0],
    [0, 85, 0],
    [170, 0, 51],
    [255, 85, 0],
    [0, 0, 85],
    [0, 119, 221],
    [85, 85, 0],
    [0, 85, 85],
    [85, 51, 0],
    [52, 86, 128],
    [0, 128, 0],
    [0, 0, 255],
    [51, 170, 221],
    [0, 255, 255],
    [85, 255, 170],
    [170, 255, 85],
    [255, 255, 0],
    [255, 170, 0],
];

/// Writes a PFM image (`Pf` for one channel, `PF` for three) from
/// channel-last, top-to-bottom `data`.
pub fn write_pfm(path: &Path, width: usize, height: usize, channels: usize, data: &[f64]) -> Result<()> {
    let tag = match channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::invalid("PFM channels", format!("must be 1 or 3, got {c}"))),
    };
    if data.len() != width * height * channels {
        return Err(Error::dim("PFM samples", width * height * channels, data.len()));
    }
    let mut out = format!("{tag}\n{width} {height}\n-1.0\n").into_bytes();
    let row = width * channels;
    for y in (0..height).rev() {
        for v in &data[y * row..(y + 1) * row] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    write_bytes(path, &out)
}

/// Reads a PFM image; returns `(width, height, channels, data)` with rows
/// top to bottom.
pub fn read_pfm(path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
    let src = path.display().to_string();
    let bytes = read_bytes(path)?;
    let bad = |why: &str| Error::format(&src, why.to_string());
    let mut fields = Vec::new();
    let mut at = 0;
    while fields.len() < 4 {
        while at < bytes.len() && bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        let start = at;
        while at < bytes.len() && !bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        if start == at {
            return Err(bad("truncated PFM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..at]).into_owned());
    }
    at += 1;
    let channels = match fields[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(bad("not a PFM file")),
    };
    let width: usize = fields[1].parse().map_err(|_| bad("bad PFM width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("bad PFM height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| bad("bad PFM scale"))?;
    let n = width * height * channels;
    let raw = bytes.get(at..at + 4 * n).ok_or_else(|| bad("truncated PFM data"))?;
    let vals: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| {
            let b = c.try_into().unwrap();
            (if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }) as f64
        })
        .collect();
    let row = width * channels;
    let mut data = Vec::with_capacity(n);
    for y in (0..height).rev() {
        data.extend_from_slice(&vals[y * row..(y + 1) * row]);
    }
    Ok((width, height, channels, data))
}

fn encode(width: usize, height: usize, color: png::ColorType, palette: Option<Vec<u8>>, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let err = |e: png::EncodingError| Error::format("PNG encoder", e.to_string());
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        if let Some(p) = palette {
            enc.set_palette(p);
        }
        let mut w = enc.write_header().map_err(err)?;
        w.write_image_data(data).map_err(err)?;
    }
    Ok(out)
}

/// Writes an 8-bit indexed PNG whose palette index is the label value.
pub fn write_label_png(path: &Path, mask: &LabelMask) -> Result<()> {
    if mask.labels.len() != mask.width * mask.height {
        return Err(Error::dim("label mask pixels", mask.width * mask.height, mask.labels.len()));
    }
    let entries = mask.labels.iter().copied().max().unwrap_or(0) as usize + 1;
    let palette: Vec<u8> = (0..entries.max(LABEL_PALETTE.len()))
        .flat_map(|i| LABEL_PALETTE.get(i).copied().unwrap_or([255, 255, 255]))
        .collect();
    let bytes = encode(mask.width, mask.height, png::ColorType::Indexed, Some(palette), &mask.labels)?;
    write_bytes(path, &bytes)
}

/// Writes one `[0, 1]` plane as an 8-bit grayscale preview.
pub fn write_gray_png(path: &Path, width: usize, height: usize, plane: &[f64]) -> Result<()> {
    if plane.len() != width * height {
        return Err(Error::dim("preview pixels", width * height, plane.len()));
    }
    let data: Vec<u8> = plane.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let bytes = encode(width, height, png::ColorType::Grayscale, None, &data)?;
    write_bytes(path, &bytes)
}

/// Reads a label map from an indexed (palette index = label) or 8-bit
/// grayscale PNG. Values are not range-checked here.
pub fn read_label_png(path: &Path) -> Result<LabelMask> {
    let src = path.display().to_string();
    let bytes = read_bytes(path)?;
    let bad = |why: String| Error::format(&src, why);
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| bad(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| bad("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    match info.color_type {
        png::ColorType::Indexed | png::ColorType::Grayscale => {}
        c => return Err(bad(format!("expected an indexed or grayscale PNG, got {c:?}"))),
    }
    let bits = match info.bit_depth {
        png::BitDepth::One => 1,
        png::BitDepth::Two => 2,
        png::BitDepth::Four => 4,
        png::BitDepth::Eight => 8,
        png::BitDepth::Sixteen => return Err(bad("16-bit label images are not supported".into())),
    };
    let mut labels = Vec::with_capacity(w * h);
    for y in 0..h {
        let line = &buf[y * info.line_size..(y + 1) * info.line_size];
        for x in 0..w {
            let v = if bits == 8 {
                line[x]
            } else {
                let bit = x * bits;
                let byte = line[bit / 8];
                let shift = 8 - bits - (bit % 8);
                (byte >> shift) & ((1u8 << bits) - 1)
            };
            labels.push(v);
        }
    }
    Ok(LabelMask {
        width: w,
        height: h,
        labels,
    })
}
