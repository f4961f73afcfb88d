use super::SimFrame;

const WIDTH: u32 = 64;
const HEIGHT: u32 = 48;
const MARK: i64 = 2;

fn label_color(label: &str) -> [u8; 3] {
    // FNV-1a, only used to pick a stable color per label
    let mut h: u32 = 0x811c_9dc5;
    for b in label.bytes() {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    [(h >> 16) as u8 | 0x40, (h >> 8) as u8 | 0x40, h as u8 | 0x40]
}

/// Placeholder image of a frame: a background shaded by head orientation and
/// a colored square at each visible entity.
pub fn render_png(frame: &SimFrame) -> Vec<u8> {
    let axis = frame.pose.optical_axis();
    let base = [
        (96.0 + 60.0 * axis.x()) as u8,
        (96.0 + 60.0 * axis.y()) as u8,
        (96.0 + 60.0 * axis.z()) as u8,
    ];
    let mut pixels = Vec::with_capacity((WIDTH * HEIGHT * 3) as usize);
    for y in 0..HEIGHT {
        let shade = (y * 24 / HEIGHT) as u8;
        for _ in 0..WIDTH {
            pixels.extend(base.iter().map(|c| c.saturating_add(shade)));
        }
    }
    for entity in &frame.visible {
        let color = label_color(&entity.label);
        let cx = (entity.pixel.u * f64::from(WIDTH - 1)).round() as i64;
        let cy = (entity.pixel.v * f64::from(HEIGHT - 1)).round() as i64;
        for y in (cy - MARK).max(0)..=(cy + MARK).min(i64::from(HEIGHT) - 1) {
            for x in (cx - MARK).max(0)..=(cx + MARK).min(i64::from(WIDTH) - 1) {
                let i = ((y * i64::from(WIDTH) + x) * 3) as usize;
                pixels[i..i + 3].copy_from_slice(&color);
            }
        }
    }

    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, WIDTH, HEIGHT);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().expect("in-memory PNG header");
    writer.write_image_data(&pixels).expect("in-memory PNG data");
    writer.finish().expect("in-memory PNG finish");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{NormalizedPixel, RigidTransform};
    use crate::simworld::{default_camera, VisibleEntity};

    #[test]
    fn png_is_valid_and_deterministic() {
        let frame = SimFrame {
            frame_id: "f0".into(),
            visible: vec![VisibleEntity {
                label: "lamp".into(),
                pixel: NormalizedPixel::new(1.0, 0.0).unwrap(),
                range: 2.0,
            }],
            pose: RigidTransform::identity(),
            camera: default_camera(),
            t_ms: 0,
        };
        let a = render_png(&frame);
        assert_eq!(&a[1..4], b"PNG");
        assert_eq!(a, render_png(&frame));
        let mut empty = frame.clone();
        empty.visible.clear();
        assert_ne!(a, render_png(&empty));
    }
}
