//! A masklet: one object's per-frame binary masks across a video. Frames
//! without an entry mean the object is absent there.

use std::collections::BTreeMap;

use crate::mask::BinaryMask;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Masklet {
    frames: BTreeMap<usize, BinaryMask>,
}

impl Masklet {
    pub fn new() -> Self {
        Masklet { frames: BTreeMap::new() }
    }

    /// Record the mask for a frame. Empty masks are treated as absence and
    /// stored as a gap.
    pub fn insert(&mut self, frame_index: usize, mask: BinaryMask) {
        if mask.is_empty() {
            self.frames.remove(&frame_index);
        } else {
            self.frames.insert(frame_index, mask);
        }
    }

    pub fn get(&self, frame_index: usize) -> Option<&BinaryMask> {
        self.frames.get(&frame_index)
    }

    pub fn is_present(&self, frame_index: usize) -> bool {
        self.frames.contains_key(&frame_index)
    }

    /// Present frames in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &BinaryMask)> {
        self.frames.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn first_frame(&self) -> Option<usize> {
        self.frames.keys().next().copied()
    }

    pub fn last_frame(&self) -> Option<usize> {
        self.frames.keys().next_back().copied()
    }
}

impl FromIterator<(usize, BinaryMask)> for Masklet {
    fn from_iter<T: IntoIterator<Item = (usize, BinaryMask)>>(iter: T) -> Self {
        let mut m = Masklet::new();
        for (k, v) in iter {
            m.insert(k, v);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_masks_are_gaps() {
        let mut m = Masklet::new();
        m.insert(3, BinaryMask::filled(2, 2));
        m.insert(5, BinaryMask::new(2, 2));
        assert!(m.is_present(3));
        assert!(!m.is_present(5));
        assert_eq!(m.len(), 1);
        assert_eq!(m.first_frame(), Some(3));
    }
}
