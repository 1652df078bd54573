//! Channel-major real images.

use crate::error::{invalid, Result};
use crate::filterbank::rotate_quarter_turns;

/// `channels × height × width` real image, channel-major, row-major planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Image<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return invalid(format!(
                "image {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> T {
        self.data[(c * self.height + row) * self.width + col]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Image<U> {
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Quarter-turn rotation of every plane about pixel `(0, 0)` on the torus.
    /// Requires a square image.
    pub fn rotate_quarter_turns(&self, turns: usize) -> Result<Self> {
        if self.height != self.width {
            return invalid("quarter-turn rotation needs a square image");
        }
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.channels {
            data.extend(rotate_quarter_turns(self.plane(c), self.height, turns));
        }
        Ok(Self { data, ..*self })
    }

    /// Circular translation: `out(r, c) = in(r - dr, c - dc)`.
    pub fn shift_circular(&self, dr: isize, dc: isize) -> Self {
        let (h, w) = (self.height as isize, self.width as isize);
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.channels {
            let plane = self.plane(c);
            for r in 0..h {
                let sr = (r - dr).rem_euclid(h) as usize;
                for col in 0..w {
                    let sc = (col - dc).rem_euclid(w) as usize;
                    data.push(plane[sr * self.width + sc]);
                }
            }
        }
        Self { data, ..*self }
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(self.width) {
            data.extend(row.iter().rev());
        }
        Self { data, ..*self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Image<i32> {
        Image::new(2, 3, 3, (0..18).collect()).unwrap()
    }

    #[test]
    fn size_mismatch() {
        assert!(Image::new(1, 2, 2, vec![0.0f32; 3]).is_err());
    }

    #[test]
    fn four_quarter_turns_is_identity() {
        let img = ramp();
        assert_eq!(img.rotate_quarter_turns(4).unwrap(), img);
        let once = img.rotate_quarter_turns(1).unwrap();
        assert_ne!(once, img);
        assert_eq!(once.rotate_quarter_turns(3).unwrap(), img);
        assert!(Image::new(1, 2, 3, vec![0; 6]).unwrap().rotate_quarter_turns(1).is_err());
    }

    #[test]
    fn shift_and_flip() {
        let img = ramp();
        let s = img.shift_circular(1, 0);
        assert_eq!(s.get(0, 1, 0), img.get(0, 0, 0));
        assert_eq!(s.shift_circular(-1, 0), img);
        let f = img.flip_horizontal();
        assert_eq!(f.get(1, 2, 0), img.get(1, 2, 2));
        assert_eq!(f.flip_horizontal(), img);
    }
}
