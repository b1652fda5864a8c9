//! PNG rendering of one depth of a puzzle tree.

use image::{Rgb, RgbImage};
use yoccoz_core::PuzzleTree;

const BACKGROUND: Rgb<u8> = Rgb([0, 0, 0]);
const OUTLINE: Rgb<u8> = Rgb([255, 255, 255]);

/// A fixed colour per piece index: golden-angle hues at fixed saturation.
pub fn palette(index: usize) -> Rgb<u8> {
    let hue = (index as f64 * 137.507_764_05).rem_euclid(360.0) / 60.0;
    let (s, v) = (0.65, 0.9);
    let c = v * s;
    let x = c * (1.0 - (hue % 2.0 - 1.0).abs());
    let (r, g, b) = match hue as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let byte = |t: f64| ((t + m) * 255.0).round() as u8;
    Rgb([byte(r), byte(g), byte(b)])
}

/// Pixel `(x, y)` is grid cell `(row y, column x)`; cells outside every piece
/// are black and the boundary cells of critical pieces white.
pub fn depth_image(tree: &PuzzleTree, depth: usize) -> RgbImage {
    let n = tree.setup().grid.resolution;
    let mut img = RgbImage::from_pixel(n as u32, n as u32, BACKGROUND);
    for piece in tree.pieces(depth) {
        let colour = palette(piece.id.index);
        for (r, c) in piece.mask.cells() {
            img.put_pixel(c as u32, r as u32, colour);
        }
    }
    for piece in tree.pieces(depth) {
        if tree.is_critical(piece.id) {
            for (r, c) in piece.mask.boundary_cells(n) {
                img.put_pixel(c as u32, r as u32, OUTLINE);
            }
        }
    }
    img
}
