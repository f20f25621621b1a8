use crate::error::Result;
use crate::tensor::{Shape, Tensor};

use super::image::Image;

/// The eight symmetries of the square: quarter-turn rotations, optionally
/// followed by a horizontal flip. `FlipRotK` rotates first, then flips.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GeomTransform {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    Flip,
    FlipRot90,
    FlipRot180,
    FlipRot270,
}

impl GeomTransform {
    pub const ALL: [GeomTransform; 8] = [
        GeomTransform::Identity,
        GeomTransform::Rot90,
        GeomTransform::Rot180,
        GeomTransform::Rot270,
        GeomTransform::Flip,
        GeomTransform::FlipRot90,
        GeomTransform::FlipRot180,
        GeomTransform::FlipRot270,
    ];

    fn from_parts(flip: bool, quarter_turns: u8) -> Self {
        Self::ALL[(flip as usize) * 4 + (quarter_turns % 4) as usize]
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).expect("listed")
    }

    pub fn flips(self) -> bool {
        self.index() >= 4
    }

    /// Counter-clockwise quarter turns applied before the optional flip.
    pub fn quarter_turns(self) -> u8 {
        (self.index() % 4) as u8
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(self, other: GeomTransform) -> GeomTransform {
        // f^a r^k · f^b r^m = f^(a+b) r^((-1)^b k + m)
        let k = self.quarter_turns() as i32;
        let m = other.quarter_turns() as i32;
        let turns = if other.flips() { m - k } else { k + m };
        Self::from_parts(self.flips() ^ other.flips(), turns.rem_euclid(4) as u8)
    }

    pub fn inverse(self) -> GeomTransform {
        if self.flips() {
            self
        } else {
            Self::from_parts(false, (4 - self.quarter_turns()) % 4)
        }
    }

    /// Output extent for an `h × w` input.
    pub fn output_dims(self, h: usize, w: usize) -> (usize, usize) {
        if self.quarter_turns() % 2 == 1 {
            (w, h)
        } else {
            (h, w)
        }
    }

    /// Source coordinate read by output position (`y`, `x`).
    fn source(self, y: usize, x: usize, h: usize, w: usize) -> (usize, usize) {
        let (_, ow) = self.output_dims(h, w);
        let x = if self.flips() { ow - 1 - x } else { x };
        match self.quarter_turns() {
            0 => (y, x),
            1 => (x, w - 1 - y),
            2 => (h - 1 - y, w - 1 - x),
            _ => (h - 1 - x, y),
        }
    }

    /// Applies the transform to every `h × w` plane of a planar buffer.
    pub fn apply_planes<T: Copy>(self, data: &[T], h: usize, w: usize) -> (Vec<T>, usize, usize) {
        let plane = h * w;
        let (oh, ow) = self.output_dims(h, w);
        let mut out = Vec::with_capacity(data.len());
        for chunk in data.chunks(plane.max(1)) {
            for y in 0..oh {
                for x in 0..ow {
                    let (sy, sx) = self.source(y, x, h, w);
                    out.push(chunk[sy * w + sx]);
                }
            }
        }
        (out, oh, ow)
    }

    /// Transforms the spatial axes of an NCHW tensor.
    pub fn apply_tensor(self, t: &Tensor) -> Result<Tensor> {
        let s = t.shape();
        let (data, oh, ow) = self.apply_planes(t.data(), s.h, s.w);
        Tensor::new(Shape::new(s.n, s.c, oh, ow), data)
    }

    pub fn apply_image(self, img: &Image) -> Image {
        let pixels: Vec<[u8; 3]> = img
            .data()
            .chunks_exact(3)
            .map(|p| [p[0], p[1], p[2]])
            .collect();
        let (out, oh, ow) = self.apply_planes(&pixels, img.height(), img.width());
        Image::new(ow, oh, out.concat()).expect("permutation keeps size")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rot90_and_flip_layout() {
        // 2×3 plane
        // 0 1 2
        // 3 4 5
        let data: Vec<u8> = (0..6).collect();
        let (r, h, w) = GeomTransform::Rot90.apply_planes(&data, 2, 3);
        assert_eq!((h, w), (3, 2));
        // counter-clockwise quarter turn
        assert_eq!(r, vec![2, 5, 1, 4, 0, 3]);
        let (f, _, _) = GeomTransform::Flip.apply_planes(&data, 2, 3);
        assert_eq!(f, vec![2, 1, 0, 5, 4, 3]);
        let (fr, _, _) = GeomTransform::FlipRot90.apply_planes(&data, 2, 3);
        let (expected, _, _) = GeomTransform::Flip.apply_planes(&r, 3, 2);
        assert_eq!(fr, expected);
    }

    #[test]
    fn group_is_closed_with_inverses() {
        for a in GeomTransform::ALL {
            assert_eq!(a.compose(a.inverse()), GeomTransform::Identity);
            assert_eq!(a.inverse().compose(a), GeomTransform::Identity);
            let products: std::collections::HashSet<_> =
                GeomTransform::ALL.iter().map(|&b| a.compose(b)).collect();
            assert_eq!(products.len(), 8);
        }
    }

    proptest! {
        #[test]
        fn composition_matches_sequential_application(
            a in 0usize..8, b in 0usize..8, h in 1usize..6, w in 1usize..6, c in 1usize..3
        ) {
            let (ta, tb) = (GeomTransform::ALL[a], GeomTransform::ALL[b]);
            let data: Vec<u32> = (0..(c * h * w) as u32).collect();
            let (first, h1, w1) = tb.apply_planes(&data, h, w);
            let (seq, h2, w2) = ta.apply_planes(&first, h1, w1);
            let (direct, h3, w3) = ta.compose(tb).apply_planes(&data, h, w);
            prop_assert_eq!((h2, w2), (h3, w3));
            prop_assert_eq!(seq, direct);
        }

        #[test]
        fn inverse_restores_input(t in 0usize..8, h in 1usize..7, w in 1usize..7, seed in any::<u64>()) {
            let g = GeomTransform::ALL[t];
            let img = Image::from_fn(w, h, |x, y| {
                let v = (seed as usize).wrapping_add(x * 31 + y * 17);
                [v as u8, (v >> 8) as u8, (v >> 16) as u8]
            });
            prop_assert_eq!(g.inverse().apply_image(&g.apply_image(&img)), img);
        }
    }
}
