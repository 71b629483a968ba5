//! Deterministic rasterization of symbolic panels and quiz sheets.

mod font;
mod raster;

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::PuzzleRecord;
use crate::symbolic::{AttributeValue, Entity, Layout, SymbolicPanel};

pub use raster::{regular_polygon, GrayImage};

pub const DEFAULT_PALETTE: [u8; 10] = [255, 224, 196, 168, 140, 112, 84, 56, 28, 0];
pub const BACKGROUND: u8 = 255;
pub const INK: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    ContextOnly,
    #[default]
    FullQuiz,
    SingleCandidate,
}

impl std::str::FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "context_only" => Ok(Self::ContextOnly),
            "full_quiz" => Ok(Self::FullQuiz),
            "single_candidate" => Ok(Self::SingleCandidate),
            other => Err(Error::Config(format!("unknown composition {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub panel_px: u32,
    pub line_width_px: u32,
    pub gray_palette: [u8; 10],
    pub composition: Composition,
    pub margin_px: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { panel_px: 160, line_width_px: 2, gray_palette: DEFAULT_PALETTE, composition: Composition::FullQuiz, margin_px: 8 }
    }
}

impl RenderConfig {
    pub fn with_composition(&self, composition: Composition) -> Self {
        Self { composition, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.panel_px < 64 {
            return Err(Error::Config(format!("panel_px {} is below 64", self.panel_px)));
        }
        if self.margin_px < 2 {
            return Err(Error::Config("margin_px must be at least 2".into()));
        }
        if self.line_width_px * 8 > self.panel_px {
            return Err(Error::Config(format!("line_width_px {} too wide for the panel", self.line_width_px)));
        }
        let p = &self.gray_palette;
        let increasing = p.windows(2).all(|w| w[0] < w[1]);
        let decreasing = p.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(Error::Config("gray_palette must be strictly monotonic".into()));
        }
        Ok(())
    }
}

/// Fraction of the slot's smaller side spanned by a shape's circumcircle.
pub fn size_fraction(level: u8) -> f64 {
    0.35 + 0.1 * (level as f64 - 1.0)
}

/// Slot rectangle in pixels as `(x, y, w, h)` floats.
pub fn slot_px(layout: &Layout, slot: u8, panel_px: u32) -> Option<(f64, f64, f64, f64)> {
    let b = layout.slots().get(slot as usize)?;
    let p = panel_px as f64;
    Some((b.x * p, b.y * p, b.w * p, b.h * p))
}

fn draw_shape(img: &mut GrayImage, attrs: &AttributeValue, cx: f64, cy: f64, r: f64, cfg: &RenderConfig) {
    let half = cfg.line_width_px as f64 / 2.0;
    let fill = cfg.gray_palette[attrs.color as usize];
    match attrs.shape_type.sides() {
        None => {
            img.fill_circle(cx, cy, r + half, INK);
            img.fill_circle(cx, cy, r - half, fill);
        }
        Some(n) => {
            let d = half / (PI / n as f64).cos();
            img.fill_polygon(&regular_polygon(n as usize, cx, cy, r + d), INK);
            img.fill_polygon(&regular_polygon(n as usize, cx, cy, r - d), fill);
        }
    }
}

fn draw_entity(img: &mut GrayImage, layout: &Layout, entity: &Entity, cfg: &RenderConfig) {
    let Some((x, y, w, h)) = slot_px(layout, entity.slot_index, cfg.panel_px) else { return };
    let r = size_fraction(entity.attrs.size) * w.min(h) / 2.0;
    draw_shape(img, &entity.attrs, x + w / 2.0, y + h / 2.0, r, cfg);
}

/// Renders one panel to a `panel_px` square. Outer components are drawn
/// before inner ones.
pub fn render_panel(panel: &SymbolicPanel, cfg: &RenderConfig) -> GrayImage {
    let mut img = GrayImage::new(cfg.panel_px, cfg.panel_px, BACKGROUND);
    for component in &panel.components {
        for entity in &component.entities {
            draw_entity(&mut img, &component.layout, entity, cfg);
        }
    }
    img
}

/// Renders a single entity of a panel on an otherwise blank panel.
pub fn render_entity(panel: &SymbolicPanel, component: usize, entity: usize, cfg: &RenderConfig) -> Option<GrayImage> {
    let comp = panel.components.get(component)?;
    let e = comp.entities.get(entity)?;
    let mut img = GrayImage::new(cfg.panel_px, cfg.panel_px, BACKGROUND);
    draw_entity(&mut img, &comp.layout, e, cfg);
    Some(img)
}

fn placeholder(cfg: &RenderConfig) -> GrayImage {
    let mut img = GrayImage::new(cfg.panel_px, cfg.panel_px, BACKGROUND);
    let scale = (cfg.panel_px / 16).max(1);
    let w = font::text_width("?", scale);
    let h = font::GLYPH_H * scale;
    font::draw_text(&mut img, "?", (cfg.panel_px - w) / 2, (cfg.panel_px - h) / 2, scale, INK);
    img
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellRole {
    Context,
    Candidate,
}

/// Pixel rectangle of one panel in a composed sheet. `index` is 1-based:
/// row-major cell number for context cells, candidate number otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellRect {
    pub role: CellRole,
    pub index: usize,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuizManifest {
    pub puzzle_id: String,
    pub composition: Composition,
    pub width: u32,
    pub height: u32,
    pub panel_px: u32,
    pub cells: Vec<CellRect>,
}

impl QuizManifest {
    pub fn cell(&self, role: CellRole, index: usize) -> Option<&CellRect> {
        self.cells.iter().find(|c| c.role == role && c.index == index)
    }
}

const STRIP_COLUMNS: usize = 4;

fn label_scale(cfg: &RenderConfig) -> u32 {
    (cfg.panel_px / 64).max(1)
}

/// Composes a puzzle sheet per `cfg.composition`.
///
/// `full_quiz` is the context grid with a `?` in cell 9 above a labelled
/// candidate strip; `context_only` is the completed 3x3 matrix;
/// `single_candidate` is the answer panel alone.
pub fn render_quiz(record: &PuzzleRecord, cfg: &RenderConfig) -> (GrayImage, QuizManifest) {
    let p = cfg.panel_px;
    let m = cfg.margin_px;
    let mut cells = Vec::new();
    let mut panels: Vec<GrayImage> = Vec::new();
    let (width, height);
    match cfg.composition {
        Composition::SingleCandidate => {
            width = p + 2 * m;
            height = width;
            cells.push(CellRect { role: CellRole::Candidate, index: record.answer_position as usize, x: m, y: m, w: p, h: p });
            panels.push(render_panel(&record.answer, cfg));
        }
        Composition::ContextOnly | Composition::FullQuiz => {
            let quiz = cfg.composition == Composition::FullQuiz;
            let grid_w = 3 * p + 2 * m;
            let candidates = if quiz { record.candidates() } else { Vec::new() };
            let strip_rows = candidates.len().div_ceil(STRIP_COLUMNS) as u32;
            let label_h = font::GLYPH_H * label_scale(cfg) + m;
            width = if quiz { STRIP_COLUMNS as u32 * (p + m) + m } else { grid_w + 2 * m };
            let x0 = (width - grid_w) / 2;
            for (i, panel) in record.full_matrix().into_iter().enumerate() {
                let (r, c) = (i as u32 / 3, i as u32 % 3);
                cells.push(CellRect { role: CellRole::Context, index: i + 1, x: x0 + c * (p + m), y: m + r * (p + m), w: p, h: p });
                panels.push(if quiz && i == 8 { placeholder(cfg) } else { render_panel(panel, cfg) });
            }
            let strip_y = 3 * (p + m) + 2 * m;
            for (i, panel) in candidates.iter().enumerate() {
                let (r, c) = ((i / STRIP_COLUMNS) as u32, (i % STRIP_COLUMNS) as u32);
                let y = strip_y + r * (p + label_h + m);
                cells.push(CellRect { role: CellRole::Candidate, index: i + 1, x: m + c * (p + m), y, w: p, h: p });
                panels.push(render_panel(panel, cfg));
            }
            height = if quiz { strip_y + strip_rows * (p + label_h + m) } else { 3 * (p + m) + m };
        }
    }
    let mut img = GrayImage::new(width, height, BACKGROUND);
    let scale = label_scale(cfg);
    for (cell, panel) in cells.iter().zip(&panels) {
        img.blit(panel, cell.x, cell.y);
        img.frame(cell.x, cell.y, cell.w, cell.h, INK);
        if cell.role == CellRole::Candidate && cfg.composition == Composition::FullQuiz {
            let label = cell.index.to_string();
            let lw = font::text_width(&label, scale);
            font::draw_text(&mut img, &label, cell.x + (cell.w - lw) / 2, cell.y + cell.h + m / 2 + 1, scale, INK);
        }
    }
    let manifest = QuizManifest {
        puzzle_id: record.puzzle_id.clone(),
        composition: cfg.composition,
        width,
        height,
        panel_px: p,
        cells,
    };
    (img, manifest)
}

pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(img.pixels.len() / 8);
    {
        let mut encoder = png::Encoder::new(&mut out, img.width, img.height);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_compression(png::Compression::Fast);
        let mut writer = encoder.write_header().map_err(|e| Error::Png(e.to_string()))?;
        writer.write_image_data(&img.pixels).map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Png(format!("expected 8-bit grayscale, found {:?}/{:?}", info.color_type, info.bit_depth)));
    }
    buf.truncate(info.buffer_size());
    Ok(GrayImage { width: info.width, height: info.height, pixels: buf })
}

pub fn write_png(path: &Path, img: &GrayImage) -> Result<()> {
    let bytes = encode_png(img)?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// `<stem>.geom.json` next to an image path.
pub fn manifest_path(image: &Path) -> std::path::PathBuf {
    image.with_extension("geom.json")
}

/// Writes the sheet and its geometry sidecar.
pub fn write_quiz(path: &Path, img: &GrayImage, manifest: &QuizManifest) -> Result<()> {
    write_png(path, img)?;
    let side = manifest_path(path);
    let json = serde_json::to_vec(manifest)?;
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}
