//! Image container, the 14-point keypoint set, and the geometric
//! transforms (crop / flip / rotate / resize) applied jointly to pixels
//! and keypoint coordinates.
//!
//! Coordinate convention, inherited by every other module: continuous
//! pixel coordinates with the center of pixel (0,0) at (0.0, 0.0),
//! x increasing rightward, y increasing downward. A point is in bounds
//! iff 0 <= x <= width-1 and 0 <= y <= height-1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of facial keypoints handled throughout the crate.
pub const NUM_KEYPOINTS: usize = 14;

/// Index of the nose keypoint (P11) in 0-based ordering.
pub const NOSE_INDEX: usize = 10;

/// Human-readable labels, P1..P14.
pub fn keypoint_label(index: usize) -> String {
    format!("P{}", index + 1)
}

/// Left/right involution applied to keypoint labels under a horizontal
/// flip: P1<->P4, P2<->P3, P5<->P10, P6<->P9, P7<->P8, P12<->P14;
/// P11 (nose) and P13 (lip centre) map to themselves.
pub const FLIP_LABEL_MAP: [usize; NUM_KEYPOINTS] = [3, 2, 1, 0, 9, 8, 7, 6, 5, 4, 10, 13, 12, 11];

/// Row-major float image, intensities in [0,1], 1 or 3 channels,
/// channel-interleaved: `data[(y*width + x)*channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::contract(format!("channels must be 1 or 3, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::contract(format!(
                "image data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::contract("image intensities must lie in [0,1]"));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Bilinear sample at a continuous position. Outside the support
    /// hull [0,w-1]x[0,h-1] the result is governed by `border`.
    pub fn sample_bilinear(&self, x: f64, y: f64, c: usize, border: Border) -> f32 {
        let w = self.width as f64;
        let h = self.height as f64;
        let (x, y) = match border {
            Border::Zero => {
                if x < 0.0 || y < 0.0 || x > w - 1.0 || y > h - 1.0 {
                    return 0.0;
                }
                (x, y)
            }
            Border::Clamp => (x.clamp(0.0, w - 1.0), y.clamp(0.0, h - 1.0)),
        };
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let ix0 = x0 as usize;
        let iy0 = y0 as usize;
        let ix1 = (ix0 + 1).min(self.width - 1);
        let iy1 = (iy0 + 1).min(self.height - 1);
        let v00 = self.get(ix0, iy0, c);
        let v10 = self.get(ix1, iy0, c);
        let v01 = self.get(ix0, iy1, c);
        let v11 = self.get(ix1, iy1, c);
        let top = v00 + fx * (v10 - v00);
        let bot = v01 + fx * (v11 - v01);
        top + fy * (bot - top)
    }
}

/// Out-of-support behaviour for bilinear sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    Zero,
    Clamp,
}

/// The 14 ordered facial keypoints with per-point visibility.
/// Index i corresponds to point P(i+1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub points: [[f64; 2]; NUM_KEYPOINTS],
    pub visible: [bool; NUM_KEYPOINTS],
}

impl KeypointSet {
    pub fn new(points: [[f64; 2]; NUM_KEYPOINTS]) -> Self {
        KeypointSet {
            points,
            visible: [true; NUM_KEYPOINTS],
        }
    }

    pub fn all_hidden() -> Self {
        KeypointSet {
            points: [[0.0, 0.0]; NUM_KEYPOINTS],
            visible: [false; NUM_KEYPOINTS],
        }
    }

    /// Re-derive visibility: a point stays visible only if it lies in
    /// the bounds of a width x height image.
    pub fn clamp_visibility(&mut self, width: usize, height: usize) {
        for i in 0..NUM_KEYPOINTS {
            if self.visible[i] && !point_in_bounds(self.points[i], width, height) {
                self.visible[i] = false;
            }
        }
    }
}

#[inline]
pub fn point_in_bounds(p: [f64; 2], width: usize, height: usize) -> bool {
    p[0] >= 0.0 && p[0] <= (width - 1) as f64 && p[1] >= 0.0 && p[1] <= (height - 1) as f64
}

/// 2x3 affine coefficient matrix mapping source to destination
/// coordinates: `x' = a x + b y + c`, `y' = d x + e y + f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub coeffs: [f64; 6],
}

impl AffineMap {
    pub fn identity() -> Self {
        AffineMap {
            coeffs: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        AffineMap {
            coeffs: [1.0, 0.0, tx, 0.0, 1.0, ty],
        }
    }

    pub fn scaling(sx: f64, sy: f64) -> Self {
        AffineMap {
            coeffs: [sx, 0.0, 0.0, 0.0, sy, 0.0],
        }
    }

    /// Rotation by `degrees` about the point (cx, cy). With y pointing
    /// down, positive angles rotate image content clockwise on screen.
    pub fn rotation_about(cx: f64, cy: f64, degrees: f64) -> Self {
        let rad = degrees.to_radians();
        let (sin, cos) = rad.sin_cos();
        AffineMap {
            coeffs: [
                cos,
                -sin,
                cx - cos * cx + sin * cy,
                sin,
                cos,
                cy - sin * cx - cos * cy,
            ],
        }
    }

    /// Composition: `self.then(g)` applies `self` first, then `g`.
    pub fn then(&self, g: &AffineMap) -> AffineMap {
        let [a1, b1, c1, d1, e1, f1] = self.coeffs;
        let [a2, b2, c2, d2, e2, f2] = g.coeffs;
        AffineMap {
            coeffs: [
                a2 * a1 + b2 * d1,
                a2 * b1 + b2 * e1,
                a2 * c1 + b2 * f1 + c2,
                d2 * a1 + e2 * d1,
                d2 * b1 + e2 * e1,
                d2 * c1 + e2 * f1 + f2,
            ],
        }
    }

    pub fn determinant(&self) -> f64 {
        let [a, b, _, d, e, _] = self.coeffs;
        a * e - b * d
    }

    pub fn invert(&self) -> Result<AffineMap> {
        let [a, b, c, d, e, f] = self.coeffs;
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::contract("affine map is singular"));
        }
        let inv_det = 1.0 / det;
        Ok(AffineMap {
            coeffs: [
                e * inv_det,
                -b * inv_det,
                (b * f - e * c) * inv_det,
                -d * inv_det,
                a * inv_det,
                (d * c - a * f) * inv_det,
            ],
        })
    }

    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let [a, b, c, d, e, f] = self.coeffs;
        [a * p[0] + b * p[1] + c, d * p[0] + e * p[1] + f]
    }
}

/// Crop a (w,h) window at integer `origin`. Keypoints are translated by
/// -origin; visible points that leave the window are marked hidden.
pub fn crop(
    img: &Image,
    kps: &KeypointSet,
    origin: (usize, usize),
    size: (usize, usize),
) -> Result<(Image, KeypointSet)> {
    let (ox, oy) = origin;
    let (w, h) = size;
    if w == 0 || h == 0 {
        return Err(Error::contract("crop size must be positive"));
    }
    if ox + w > img.width || oy + h > img.height {
        return Err(Error::contract(format!(
            "crop rectangle {}x{}+{}+{} exceeds image bounds {}x{}",
            w, h, ox, oy, img.width, img.height
        )));
    }
    let mut out = Image::new(w, h, img.channels);
    let row_len = w * img.channels;
    for y in 0..h {
        let src_start = ((y + oy) * img.width + ox) * img.channels;
        let dst_start = y * w * img.channels;
        out.data[dst_start..dst_start + row_len]
            .copy_from_slice(&img.data[src_start..src_start + row_len]);
    }
    let mut out_kps = *kps;
    for p in out_kps.points.iter_mut() {
        p[0] -= ox as f64;
        p[1] -= oy as f64;
    }
    out_kps.clamp_visibility(w, h);
    Ok((out, out_kps))
}

/// Mirror pixels about the vertical axis and remap keypoint labels by
/// the left/right involution so semantic identities stay correct.
pub fn flip_horizontal(img: &Image, kps: &KeypointSet) -> (Image, KeypointSet) {
    let mut out = Image::new(img.width, img.height, img.channels);
    let c = img.channels;
    for y in 0..img.height {
        for x in 0..img.width {
            let sx = img.width - 1 - x;
            for ch in 0..c {
                out.data[(y * img.width + x) * c + ch] = img.data[(y * img.width + sx) * c + ch];
            }
        }
    }
    let a = (img.width - 1) as f64;
    let mut out_kps = KeypointSet::all_hidden();
    for i in 0..NUM_KEYPOINTS {
        let src = FLIP_LABEL_MAP[i];
        out_kps.points[i] = [a - kps.points[src][0], kps.points[src][1]];
        out_kps.visible[i] = kps.visible[src];
    }
    (out, out_kps)
}

/// Rotate about the image center. Pixels are resampled bilinearly with
/// zero fill outside the source support; keypoints follow the same map
/// and are hidden if they leave the bounds.
pub fn rotate(img: &Image, kps: &KeypointSet, degrees: f64) -> Result<(Image, KeypointSet)> {
    if !(degrees.is_finite() && degrees.abs() <= 180.0) {
        return Err(Error::contract(format!(
            "rotation angle {degrees} outside [-180, 180]"
        )));
    }
    let cx = (img.width - 1) as f64 / 2.0;
    let cy = (img.height - 1) as f64 / 2.0;
    let map = AffineMap::rotation_about(cx, cy, degrees);
    let inv = map.invert()?;
    let mut out = Image::new(img.width, img.height, img.channels);
    for y in 0..img.height {
        for x in 0..img.width {
            let src = inv.apply([x as f64, y as f64]);
            for ch in 0..img.channels {
                let v = img.sample_bilinear(src[0], src[1], ch, Border::Zero);
                out.set(x, y, ch, v);
            }
        }
    }
    let mut out_kps = *kps;
    for p in out_kps.points.iter_mut() {
        *p = map.apply(*p);
    }
    out_kps.clamp_visibility(img.width, img.height);
    Ok((out, out_kps))
}

/// Bilinear resize; keypoints scale as x' = x*(w'/w), y' = y*(h'/h).
pub fn resize(img: &Image, kps: &KeypointSet, new_size: (usize, usize)) -> Result<(Image, KeypointSet)> {
    let (nw, nh) = new_size;
    if nw == 0 || nh == 0 {
        return Err(Error::contract("resize dimensions must be >= 1"));
    }
    if (nw, nh) == (img.width, img.height) {
        return Ok((img.clone(), *kps));
    }
    let sx = img.width as f64 / nw as f64;
    let sy = img.height as f64 / nh as f64;
    let mut out = Image::new(nw, nh, img.channels);
    for y in 0..nh {
        let src_y = y as f64 * sy;
        for x in 0..nw {
            let src_x = x as f64 * sx;
            for ch in 0..img.channels {
                let v = img.sample_bilinear(src_x, src_y, ch, Border::Clamp);
                out.set(x, y, ch, v);
            }
        }
    }
    let kx = nw as f64 / img.width as f64;
    let ky = nh as f64 / img.height as f64;
    let mut out_kps = *kps;
    for p in out_kps.points.iter_mut() {
        p[0] *= kx;
        p[1] *= ky;
    }
    out_kps.clamp_visibility(nw, nh);
    Ok((out, out_kps))
}

/// Load an 8-bit PNG as floats in [0,1] (gray -> 1 channel, anything
/// else -> RGB).
pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let dynimg = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()?;
    match dynimg {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            let data = g.into_raw().iter().map(|&v| v as f32 / 255.0).collect();
            Ok(Image {
                width: w,
                height: h,
                channels: 1,
                data,
            })
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let data = rgb.into_raw().iter().map(|&v| v as f32 / 255.0).collect();
            Ok(Image {
                width: w,
                height: h,
                channels: 3,
                data,
            })
        }
    }
}

/// Store as 8-bit PNG, mapping intensity v to round(v*255).
pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let to_u8 = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let bytes: Vec<u8> = img.data.iter().map(|&v| to_u8(v)).collect();
    let (w, h) = (img.width as u32, img.height as u32);
    match img.channels {
        1 => image::GrayImage::from_raw(w, h, bytes)
            .expect("buffer sized by construction")
            .save_with_format(path, image::ImageFormat::Png)?,
        3 => image::RgbImage::from_raw(w, h, bytes)
            .expect("buffer sized by construction")
            .save_with_format(path, image::ImageFormat::Png)?,
        _ => unreachable!("Image invariant: channels is 1 or 3"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_kps() -> KeypointSet {
        // Dyadic coordinates: exact under the flip arithmetic.
        let mut pts = [[0.0; 2]; NUM_KEYPOINTS];
        for (i, p) in pts.iter_mut().enumerate() {
            p[0] = 20.0 + 13.25 * i as f64;
            p[1] = 30.0 + 7.5 * i as f64;
        }
        KeypointSet::new(pts)
    }

    fn gradient_image(w: usize, h: usize) -> Image {
        let mut img = Image::new(w, h, 3);
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, 0, x as f32 / w as f32);
                img.set(x, y, 1, y as f32 / h as f32);
                img.set(x, y, 2, ((x ^ y) & 0xff) as f32 / 255.0);
            }
        }
        img
    }

    #[test]
    fn crop_identity() {
        let img = gradient_image(256, 256);
        let kps = sample_kps();
        let (out, okps) = crop(&img, &kps, (0, 0), (256, 256)).unwrap();
        assert_eq!(out, img);
        assert_eq!(okps, kps);
    }

    #[test]
    fn crop_translates_coordinates() {
        let img = gradient_image(256, 256);
        let mut kps = sample_kps();
        kps.points[0] = [100.0, 120.0];
        let (_, okps) = crop(&img, &kps, (4, 4), (248, 248)).unwrap();
        assert_eq!(okps.points[0], [96.0, 116.0]);
    }

    #[test]
    fn crop_hides_outside_points() {
        let img = gradient_image(256, 256);
        let mut kps = sample_kps();
        kps.points[2] = [2.0, 2.0];
        let (_, okps) = crop(&img, &kps, (4, 4), (248, 248)).unwrap();
        assert!(!okps.visible[2]);
    }

    #[test]
    fn crop_out_of_bounds_rejected() {
        let img = gradient_image(100, 100);
        let kps = sample_kps();
        assert!(crop(&img, &kps, (10, 10), (100, 50)).is_err());
    }

    #[test]
    fn flip_is_involution() {
        let img = gradient_image(64, 64);
        let kps = sample_kps();
        let (f1, k1) = flip_horizontal(&img, &kps);
        let (f2, k2) = flip_horizontal(&f1, &k1);
        assert_eq!(f2, img);
        assert_eq!(k2, kps);
    }

    #[test]
    fn flip_remaps_labels() {
        let img = gradient_image(256, 256);
        let mut kps = sample_kps();
        kps.points[0] = [10.0, 40.0]; // P1
        let (_, okps) = flip_horizontal(&img, &kps);
        // P1's mirrored location is now stored in the P4 slot.
        assert_eq!(okps.points[3], [245.0, 40.0]);
    }

    #[test]
    fn flip_x_formula() {
        let img = gradient_image(256, 1);
        let mut kps = sample_kps();
        for p in kps.points.iter_mut() {
            *p = [10.0, 0.0];
        }
        let (_, okps) = flip_horizontal(&img, &kps);
        assert_eq!(okps.points[0][0], 245.0);
    }

    #[test]
    fn rotate_zero_is_identity() {
        let img = gradient_image(64, 64);
        let kps = sample_kps();
        let (out, okps) = rotate(&img, &kps, 0.0).unwrap();
        for i in 0..NUM_KEYPOINTS {
            assert!((okps.points[i][0] - kps.points[i][0]).abs() < 1e-6);
            assert!((okps.points[i][1] - kps.points[i][1]).abs() < 1e-6);
        }
        for (a, b) in out.data.iter().zip(img.data.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rotate_roundtrip_restores_coordinates() {
        let img = gradient_image(256, 256);
        let mut kps = sample_kps();
        // keep points near the center so they survive both rotations
        for (i, p) in kps.points.iter_mut().enumerate() {
            p[0] = 110.0 + 3.0 * i as f64;
            p[1] = 120.0 + 2.0 * i as f64;
        }
        let (r1, k1) = rotate(&img, &kps, 40.0).unwrap();
        let (_, k2) = rotate(&r1, &k1, -40.0).unwrap();
        for i in 0..NUM_KEYPOINTS {
            assert!((k2.points[i][0] - kps.points[i][0]).abs() < 1e-6);
            assert!((k2.points[i][1] - kps.points[i][1]).abs() < 1e-6);
        }
    }

    #[test]
    fn rotate_fixes_center() {
        let img = gradient_image(65, 65);
        let mut kps = sample_kps();
        kps.points[5] = [32.0, 32.0];
        for deg in [-137.0, -40.0, 13.5, 90.0, 180.0] {
            let (_, okps) = rotate(&img, &kps, deg).unwrap();
            assert!((okps.points[5][0] - 32.0).abs() < 1e-9);
            assert!((okps.points[5][1] - 32.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rotate_angle_bounds() {
        let img = gradient_image(8, 8);
        let kps = sample_kps();
        assert!(rotate(&img, &kps, 181.0).is_err());
        assert!(rotate(&img, &kps, f64::NAN).is_err());
    }

    #[test]
    fn resize_same_size_is_identity() {
        let img = gradient_image(64, 48);
        let kps = sample_kps();
        let (out, okps) = resize(&img, &kps, (64, 48)).unwrap();
        assert_eq!(out, img);
        assert_eq!(okps, kps);
    }

    #[test]
    fn resize_scales_coordinates() {
        let img = gradient_image(248, 248);
        let mut kps = sample_kps();
        kps.points[0] = [124.0, 124.0];
        let (out, okps) = resize(&img, &kps, (256, 256)).unwrap();
        assert_eq!(out.width, 256);
        assert!((okps.points[0][0] - 128.0).abs() < 1e-6);
        assert!((okps.points[0][1] - 128.0).abs() < 1e-6);
    }

    #[test]
    fn resize_down_up_restores_coordinates_exactly() {
        let img = gradient_image(256, 256);
        let mut kps = sample_kps();
        for (i, p) in kps.points.iter_mut().enumerate() {
            p[0] = 40.0 + 11.7 * i as f64;
            p[1] = 50.0 + 9.3 * i as f64;
        }
        let (small, k1) = resize(&img, &kps, (64, 64)).unwrap();
        let (_, k2) = resize(&small, &k1, (256, 256)).unwrap();
        for i in 0..NUM_KEYPOINTS {
            assert_eq!(k2.points[i], kps.points[i]);
        }
    }

    #[test]
    fn resize_rejects_zero_dims() {
        let img = gradient_image(8, 8);
        assert!(resize(&img, &sample_kps(), (0, 4)).is_err());
    }

    #[test]
    fn affine_compose_and_invert() {
        let m = AffineMap::rotation_about(10.0, 20.0, 33.0)
            .then(&AffineMap::translation(5.0, -2.0))
            .then(&AffineMap::scaling(2.0, 0.5));
        let inv = m.invert().unwrap();
        let p = [3.7, -1.2];
        let q = inv.apply(m.apply(p));
        assert!((q[0] - p[0]).abs() < 1e-12);
        assert!((q[1] - p[1]).abs() < 1e-12);
    }

    #[test]
    fn png_roundtrip_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = gradient_image(32, 24);
        save_png(&img, &path).unwrap();
        let loaded = load_png(&path).unwrap();
        assert_eq!(loaded.width, 32);
        assert_eq!(loaded.height, 24);
        assert_eq!(loaded.channels, 3);
        // round-trip is exact up to the 8-bit quantization step
        for (a, b) in loaded.data.iter().zip(img.data.iter()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn transforms_respect_visibility_rule() {
        let img = gradient_image(64, 64);
        let kps = sample_kps();
        let (_, k) = rotate(&img, &kps, 35.0).unwrap();
        for i in 0..NUM_KEYPOINTS {
            if k.visible[i] {
                assert!(point_in_bounds(k.points[i], 64, 64));
            }
        }
    }
}
