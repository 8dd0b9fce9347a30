//! Ground-truth labels derived from render buffers.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::io::{to_u16_ids, write_gray16, write_rgb16};
use crate::num::{Real, Vec3};
use crate::scene::{CameraIntrinsics, RenderBuffers};

/// Normalized center-size box in YOLO layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoloBox {
    pub class_id: u32,
    pub instance_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl YoloBox {
    /// `class cx cy w h` with six decimals.
    pub fn label_line(&self) -> String {
        format!("{} {:.6} {:.6} {:.6} {:.6}", self.class_id, self.cx, self.cy, self.w, self.h)
    }
}

#[derive(Debug, Clone, Copy)]
struct Extent {
    class_id: u32,
    pixels: usize,
    min: (usize, usize),
    max: (usize, usize),
}

/// Tight boxes around every visible instance, ordered by instance id.
pub fn bounding_boxes<T: Real>(buffers: &RenderBuffers<T>) -> Vec<YoloBox> {
    bounding_boxes_min_pixels(buffers, 1)
}

/// As [`bounding_boxes`], skipping instances with fewer than `min_pixels` visible pixels.
pub fn bounding_boxes_min_pixels<T: Real>(buffers: &RenderBuffers<T>, min_pixels: usize) -> Vec<YoloBox> {
    let (w, h) = (buffers.width, buffers.height);
    let mut extents: BTreeMap<u32, Extent> = BTreeMap::new();
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let id = buffers.instance_id[i];
            if id == 0 {
                continue;
            }
            let e = extents.entry(id).or_insert(Extent {
                class_id: buffers.class_id[i],
                pixels: 0,
                min: (u, v),
                max: (u, v),
            });
            e.pixels += 1;
            e.min = (e.min.0.min(u), e.min.1.min(v));
            e.max = (e.max.0.max(u), e.max.1.max(v));
        }
    }
    let (wf, hf) = (w as f64, h as f64);
    extents
        .into_iter()
        .filter(|(_, e)| e.pixels >= min_pixels.max(1))
        .map(|(id, e)| YoloBox {
            class_id: e.class_id,
            instance_id: id,
            cx: (e.min.0 + e.max.0 + 1) as f64 / (2.0 * wf),
            cy: (e.min.1 + e.max.1 + 1) as f64 / (2.0 * hf),
            w: (e.max.0 - e.min.0 + 1) as f64 / wf,
            h: (e.max.1 - e.min.1 + 1) as f64 / hf,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMasks {
    pub width: usize,
    pub height: usize,
    pub semantic: Vec<u32>,
    pub instance: Vec<u32>,
    /// `(class id, instance id)` per pixel.
    pub panoptic: Vec<(u32, u32)>,
}

pub fn segmentation<T: Real>(buffers: &RenderBuffers<T>) -> SegmentationMasks {
    let semantic = buffers.class_id.clone();
    let instance = buffers.instance_id.clone();
    let panoptic = semantic.iter().copied().zip(instance.iter().copied()).collect();
    SegmentationMasks { width: buffers.width, height: buffers.height, semantic, instance, panoptic }
}

impl SegmentationMasks {
    /// Writes `<stem>_semantic.png`, `<stem>_instance.png` and `<stem>_panoptic.png` (16-bit).
    ///
    /// The panoptic image stores class in red and instance in green.
    pub fn write_pngs(&self, dir: &Path, stem: &str) -> Result<()> {
        let (w, h) = (self.width, self.height);
        write_gray16(&dir.join(format!("{stem}_semantic.png")), w, h, &to_u16_ids(&self.semantic))?;
        write_gray16(&dir.join(format!("{stem}_instance.png")), w, h, &to_u16_ids(&self.instance))?;
        let sem = to_u16_ids(&self.semantic);
        let inst = to_u16_ids(&self.instance);
        let pan: Vec<[u16; 3]> = sem.iter().zip(&inst).map(|(&c, &i)| [c, i, 0]).collect();
        write_rgb16(&dir.join(format!("{stem}_panoptic.png")), w, h, &pan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint<T: Real> {
    /// Camera frame, meters.
    pub position: Vec3<T>,
    pub class_id: u32,
    pub instance_id: u32,
}

/// Back-projects every pixel with finite depth.
pub fn point_cloud<T: Real>(buffers: &RenderBuffers<T>, intr: &CameraIntrinsics<T>) -> Vec<LabeledPoint<T>> {
    let mut out = Vec::new();
    for v in 0..buffers.height {
        for u in 0..buffers.width {
            let i = v * buffers.width + u;
            let z = buffers.depth[i];
            if !z.finite() {
                continue;
            }
            let x = (T::lit(u as f64) - intr.principal_point.x) * z / intr.focal_length;
            let y = (T::lit(v as f64) - intr.principal_point.y) * z / intr.focal_length;
            out.push(LabeledPoint {
                position: Vec3::new(x, y, z),
                class_id: buffers.class_id[i],
                instance_id: buffers.instance_id[i],
            });
        }
    }
    out
}

pub fn write_yolo_labels<W: Write>(boxes: &[YoloBox], mut w: W) -> Result<()> {
    for b in boxes {
        writeln!(w, "{}", b.label_line())?;
    }
    Ok(())
}

/// Class-name sidecar: one name per line, line `k` naming class id `k`.
pub fn write_class_names<W: Write>(names: &[String], mut w: W) -> Result<()> {
    for n in names {
        writeln!(w, "{n}")?;
    }
    Ok(())
}

/// `x y z class instance` per line.
pub fn write_point_cloud<T: Real, W: Write>(points: &[LabeledPoint<T>], mut w: W) -> Result<()> {
    for p in points {
        let q = p.position;
        writeln!(w, "{:.6} {:.6} {:.6} {} {}", q.x, q.y, q.z, p.class_id, p.instance_id)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Vec2;

    fn buffers(w: usize, h: usize, fill: impl Fn(usize, usize) -> (u32, u32, f64)) -> RenderBuffers<f64> {
        let mut b = RenderBuffers::empty(w, h);
        for v in 0..h {
            for u in 0..w {
                let (inst, class, depth) = fill(u, v);
                let i = b.index(u, v);
                if inst > 0 {
                    b.instance_id[i] = inst;
                    b.class_id[i] = class;
                    b.depth[i] = depth;
                }
            }
        }
        b
    }

    #[test]
    fn boxes() {
        let full = buffers(8, 6, |_, _| (1, 2, 1.0));
        let b = bounding_boxes(&full);
        assert_eq!(b.len(), 1);
        assert_eq!((b[0].cx, b[0].cy, b[0].w, b[0].h, b[0].class_id), (0.5, 0.5, 1.0, 1.0, 2));
        assert!(bounding_boxes(&RenderBuffers::<f64>::empty(4, 4)).is_empty());
        let left = buffers(100, 10, |u, _| if u < 50 { (3, 1, 1.0) } else { (0, 0, 0.0) });
        let b = bounding_boxes(&left);
        assert_eq!((b[0].cx, b[0].w), (0.25, 0.5));
        assert_eq!(b[0].label_line(), "1 0.250000 0.500000 0.500000 1.000000");
    }

    #[test]
    fn boxes_ordered_and_filtered() {
        let b = buffers(10, 10, |u, v| match (u, v) {
            (0, 0) => (9, 1, 1.0),
            (5..=7, 2..=4) => (4, 1, 1.0),
            _ => (0, 0, 0.0),
        });
        let boxes = bounding_boxes(&b);
        assert_eq!(boxes.iter().map(|b| b.instance_id).collect::<Vec<_>>(), vec![4, 9]);
        assert!((boxes[0].cx - 0.65).abs() < 1e-12 && (boxes[0].h - 0.3).abs() < 1e-12);
        assert_eq!(bounding_boxes_min_pixels(&b, 2).len(), 1);
    }

    #[test]
    fn masks() {
        let b = buffers(4, 2, |u, _| if u < 2 { (1, 5, 1.0) } else { (2, 5, 1.0) });
        let m = segmentation(&b);
        assert_eq!(m.semantic, vec![5; 8]);
        assert_eq!(m.panoptic[0], (5, 1));
        assert_eq!(m.panoptic[3], (5, 2));
        let e = segmentation(&RenderBuffers::<f64>::empty(3, 3));
        assert!(e.panoptic.iter().all(|&p| p == (0, 0)));
        let dir = tempfile::tempdir().unwrap();
        m.write_pngs(dir.path(), "000001").unwrap();
        assert!(dir.path().join("000001_panoptic.png").exists());
    }

    #[test]
    fn cloud() {
        let intr = CameraIntrinsics::new(9, 5, 4.0, Vec2::new(4.0, 2.0)).unwrap();
        let b = buffers(9, 5, |u, v| match (u, v) {
            (4, 2) => (1, 1, 3.0),
            (8, 2) => (2, 1, 2.0),
            _ => (0, 0, 0.0),
        });
        let pts = point_cloud(&b, &intr);
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].position, Vec3::new(0.0, 0.0, 3.0));
        assert_eq!(pts[1].position, Vec3::new(2.0, 0.0, 2.0));
        assert!(point_cloud(&RenderBuffers::<f64>::empty(9, 5), &intr).is_empty());
        let mut buf = Vec::new();
        write_point_cloud(&pts, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().next().unwrap(), "0.000000 0.000000 3.000000 1 1");
    }
}
