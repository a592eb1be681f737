use crate::corpus::{to_pixel, BodyPose, FaceCrop, Image, HEAD_KEYPOINTS};

/// Smallest crop side, in source pixels.
pub const MIN_CROP_SIDE: f64 = 32.0;

/// Crop side as a multiple of the largest head-keypoint distance.
pub const CROP_SPREAD: f64 = 1.5;

/// Square source region of a face crop, in continuous pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropBox {
    pub x0: f64,
    pub y0: f64,
    pub side: f64,
}

/// Where the face crop for `pose` lies in an image of the given size, or
/// `None` when no head keypoint is confident.
pub fn crop_box(pose: &BodyPose, width: usize, height: usize) -> Option<CropBox> {
    let pts: Vec<(f64, f64)> = HEAD_KEYPOINTS
        .iter()
        .map(|&i| pose.keypoints[i])
        .filter(|k| k.is_confident())
        .map(|k| (to_pixel(k.x, width), to_pixel(k.y, height)))
        .collect();
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut spread = 0.0f64;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            spread = spread.max(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt());
        }
    }
    let side = (CROP_SPREAD * spread).max(MIN_CROP_SIDE).min(width.min(height) as f64);
    // shift the square inside the image before clamping so it stays square
    let x0 = (cx - side / 2.0).clamp(0.0, width as f64 - side);
    let y0 = (cy - side / 2.0).clamp(0.0, height as f64 - side);
    Some(CropBox { x0, y0, side })
}

/// Bilinear sample of channel `c` at continuous coordinate `(x, y)`; pixel
/// centres sit at half-integers and edges are replicated.
fn bilinear(image: &Image, x: f64, y: f64, c: usize) -> f64 {
    let u = (x - 0.5).clamp(0.0, (image.width - 1) as f64);
    let v = (y - 0.5).clamp(0.0, (image.height - 1) as f64);
    let (x0, y0) = (u.floor() as usize, v.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(image.width - 1), (y0 + 1).min(image.height - 1));
    let (fx, fy) = (u - x0 as f64, v - y0 as f64);
    let at = |x: usize, y: usize| image.rgb(x, y)[c] as f64;
    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
    let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Cuts the square face region out of `image` and resizes it to
/// `resolution x resolution`. `None` when the pose has no confident head keypoint.
pub fn crop_face(image: &Image, pose: &BodyPose, resolution: usize, source_frame: u64) -> Option<FaceCrop> {
    let b = crop_box(pose, image.width, image.height)?;
    let scale = b.side / resolution as f64;
    let mut pixels = Vec::with_capacity(resolution * resolution * 3);
    for j in 0..resolution {
        let y = b.y0 + (j as f64 + 0.5) * scale;
        for i in 0..resolution {
            let x = b.x0 + (i as f64 + 0.5) * scale;
            for c in 0..3 {
                pixels.push(bilinear(image, x, y, c).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Some(FaceCrop::new(resolution, pixels, source_frame).expect("crop buffer sized for resolution"))
}
