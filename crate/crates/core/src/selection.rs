//! View selection: score each aligned view by how much field it shows, pick a
//! camera per frame with hysteresis, and assemble the output stream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Homography};
use crate::image::Image;
use crate::rehoming::{surgical_field_area, FieldSegmentation};
use crate::stream::FrameBundle;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("min_dwell must be at least 1")]
    InvalidDwell,
    #[error("margin must lie in (0, 1], got {0}")]
    InvalidMargin(f64),
    #[error("frame {t} has {got} scores, expected {expected}")]
    ScoreCount { t: usize, expected: usize, got: usize },
    #[error("schedule covers {covered} frames, stream has {len}")]
    ScheduleMismatch { covered: usize, len: usize },
    #[error("no cameras to choose from")]
    NoCameras,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub camera: usize,
}

/// Contiguous segments covering `[0, T)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchSchedule {
    pub segments: Vec<Segment>,
}

impl SwitchSchedule {
    pub fn len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end)
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn camera_at(&self, t: usize) -> Option<usize> {
        let i = self.segments.partition_point(|s| s.end <= t);
        self.segments.get(i).filter(|s| s.start <= t).map(|s| s.camera)
    }

    /// Segments start at 0, touch, and are non-empty.
    pub fn is_partition(&self) -> bool {
        let mut next = 0;
        for s in &self.segments {
            if s.start != next || s.end <= s.start {
                return false;
            }
            next = s.end;
        }
        true
    }
}

/// Per-camera occlusion scores from field areas: each area divided by the
/// largest. With no field visible anywhere every score is 1.
pub fn scores_from_areas(areas: &[u64]) -> Vec<f64> {
    let max = areas.iter().cloned().max().unwrap_or(0);
    if max == 0 {
        return vec![1.0; areas.len()];
    }
    areas.iter().map(|&a| a as f64 / max as f64).collect()
}

/// Occlusion scores of an aligned bundle; higher means less occluded.
pub fn occlusion_score(aligned: &FrameBundle, seg: &FieldSegmentation) -> Vec<f64> {
    let areas: Vec<u64> = aligned.images.iter().map(|i| surgical_field_area(i, seg)).collect();
    scores_from_areas(&areas)
}

/// Field area of a view after warping by `h`, from its raw field mask.
/// Each output pixel takes the mask value nearest to its source position.
pub fn aligned_field_area(h: &Homography, mask: &[bool], width: u32, height: u32) -> Result<u64, GeometryError> {
    let inv = h.inverse()?;
    let m = inv.matrix();
    let (w, hh) = (width as i64, height as i64);
    let mut n = 0u64;
    for y in 0..height {
        let yf = y as f64;
        let bx = m[(0, 1)] * yf + m[(0, 2)];
        let by = m[(1, 1)] * yf + m[(1, 2)];
        let bw = m[(2, 1)] * yf + m[(2, 2)];
        for x in 0..width {
            let xf = x as f64;
            let d = m[(2, 0)] * xf + bw;
            if d.abs() <= crate::geometry::MIN_DEPTH {
                continue;
            }
            let sx = ((m[(0, 0)] * xf + bx) / d).round() as i64;
            let sy = ((m[(1, 0)] * xf + by) / d).round() as i64;
            if sx >= 0 && sy >= 0 && sx < w && sy < hh && mask[(sy * w + sx) as usize] {
                n += 1;
            }
        }
    }
    Ok(n)
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Causal form of [`plan_switches`]: feed one frame of scores at a time.
#[derive(Debug, Clone)]
pub struct SwitchPlanner {
    min_dwell: usize,
    margin: f64,
    t: usize,
    segments: Vec<Segment>,
}

impl SwitchPlanner {
    pub fn new(min_dwell: usize, margin: f64) -> Result<Self, SelectionError> {
        if min_dwell == 0 {
            return Err(SelectionError::InvalidDwell);
        }
        if !(margin > 0.0 && margin <= 1.0) {
            return Err(SelectionError::InvalidMargin(margin));
        }
        Ok(Self {
            min_dwell,
            margin,
            t: 0,
            segments: Vec::new(),
        })
    }

    /// Camera shown at the next frame. The current camera is kept while it
    /// is the best or scores strictly above `margin` times the best; otherwise
    /// the planner moves to the best camera (lowest id on ties) once the
    /// current segment has lasted `min_dwell` frames.
    pub fn step(&mut self, scores: &[f64]) -> Result<usize, SelectionError> {
        if scores.is_empty() {
            return Err(SelectionError::NoCameras);
        }
        let t = self.t;
        self.t += 1;
        let best = argmax(scores);
        let Some(cur) = self.segments.last_mut() else {
            self.segments.push(Segment {
                start: t,
                end: t + 1,
                camera: best,
            });
            return Ok(best);
        };
        if cur.camera >= scores.len() {
            return Err(SelectionError::ScoreCount {
                t,
                expected: cur.camera + 1,
                got: scores.len(),
            });
        }
        let hold = cur.camera == best || scores[cur.camera] > self.margin * scores[best];
        if hold || cur.end - cur.start < self.min_dwell {
            cur.end = t + 1;
            return Ok(cur.camera);
        }
        self.segments.push(Segment {
            start: t,
            end: t + 1,
            camera: best,
        });
        Ok(best)
    }

    pub fn schedule(&self) -> SwitchSchedule {
        SwitchSchedule {
            segments: self.segments.clone(),
        }
    }
}

/// Greedy hysteresis schedule over `scores[t][camera]`.
pub fn plan_switches(scores: &[Vec<f64>], min_dwell: usize, margin: f64) -> Result<SwitchSchedule, SelectionError> {
    let mut p = SwitchPlanner::new(min_dwell, margin)?;
    let n = scores.first().map_or(0, |s| s.len());
    for (t, s) in scores.iter().enumerate() {
        if s.len() != n {
            return Err(SelectionError::ScoreCount {
                t,
                expected: n,
                got: s.len(),
            });
        }
        p.step(s)?;
    }
    Ok(p.schedule())
}

/// Output frames: at each `t`, the scheduled camera's aligned view.
pub fn synthesize(y: &[FrameBundle], schedule: &SwitchSchedule) -> Result<Vec<Image>, SelectionError> {
    if schedule.len() != y.len() || !schedule.is_partition() {
        return Err(SelectionError::ScheduleMismatch {
            covered: schedule.len(),
            len: y.len(),
        });
    }
    y.iter()
        .enumerate()
        .map(|(t, b)| {
            let cam = schedule.camera_at(t).unwrap();
            b.images.get(cam).cloned().ok_or(SelectionError::NoCameras)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::filled;

    #[test]
    fn constant_best_is_one_segment() {
        let scores = vec![vec![0.2, 0.3, 0.1, 1.0, 0.5]; 100];
        let s = plan_switches(&scores, 15, 0.8).unwrap();
        assert_eq!(
            s.segments,
            vec![Segment {
                start: 0,
                end: 100,
                camera: 3
            }]
        );
    }

    #[test]
    fn single_handover() {
        let scores: Vec<Vec<f64>> = (0..1000)
            .map(|t| if t < 500 { vec![1.0, 0.3] } else { vec![0.3, 1.0] })
            .collect();
        let s = plan_switches(&scores, 15, 0.8).unwrap();
        assert_eq!(s.segments.len(), 2);
        assert!((500..=515).contains(&s.segments[1].start));
    }

    #[test]
    fn flicker_inside_margin_is_suppressed() {
        let scores: Vec<Vec<f64>> = (0..300)
            .map(|t| if t % 2 == 0 { vec![1.0, 0.9] } else { vec![0.9, 1.0] })
            .collect();
        assert_eq!(plan_switches(&scores, 15, 0.8).unwrap().segments.len(), 1);
    }

    #[test]
    fn errors() {
        assert_eq!(plan_switches(&[], 0, 0.8), Err(SelectionError::InvalidDwell));
        assert_eq!(plan_switches(&[], 1, 0.0), Err(SelectionError::InvalidMargin(0.0)));
        assert!(plan_switches(&[], 1, 1.0).unwrap().is_empty());
    }

    #[test]
    fn all_dark_bundle_scores_one() {
        let b = FrameBundle::new(0, vec![filled(8, 8, [0, 0, 0]); 3]);
        assert_eq!(occlusion_score(&b, &FieldSegmentation::default()), vec![1.0; 3]);
    }

    #[test]
    fn synthesize_follows_schedule() {
        let y: Vec<FrameBundle> = (0..4)
            .map(|t| FrameBundle::new(t, vec![filled(2, 2, [t as u8, 0, 0]), filled(2, 2, [0, t as u8, 0])]))
            .collect();
        let sched = SwitchSchedule {
            segments: vec![
                Segment {
                    start: 0,
                    end: 2,
                    camera: 0,
                },
                Segment {
                    start: 2,
                    end: 4,
                    camera: 1,
                },
            ],
        };
        let z = synthesize(&y, &sched).unwrap();
        assert_eq!(z[1], y[1].images[0]);
        assert_eq!(z[3], y[3].images[1]);
        assert!(synthesize(&y[..3], &sched).is_err());
    }

    #[test]
    fn aligned_area_identity_and_shift() {
        let mut mask = vec![false; 20 * 10];
        for y in 0..10 {
            for x in 0..5 {
                mask[y * 20 + x] = true;
            }
        }
        assert_eq!(aligned_field_area(&Homography::identity(), &mask, 20, 10).unwrap(), 50);
        // shifting right keeps the strip fully inside
        assert_eq!(
            aligned_field_area(&Homography::translation(3.0, 0.0), &mask, 20, 10).unwrap(),
            50
        );
        // shifting left pushes part of it out
        assert_eq!(
            aligned_field_area(&Homography::translation(-3.0, 0.0), &mask, 20, 10).unwrap(),
            20
        );
    }
}
