//! First-fit free-list allocator over a contiguous byte range.
//!
//! Free space is kept as maximal, coalesced gaps keyed by offset, so the
//! first gap that admits an aligned placement always yields the lowest
//! aligned offset not intersecting a live block.

use std::collections::BTreeMap;

use super::MemoryError;

pub const DEFAULT_ALIGN: u64 = 64;

#[derive(Debug, Clone)]
pub struct FirstFitAllocator {
    capacity: u64,
    /// offset -> length of each free gap
    free: BTreeMap<u64, u64>,
    /// offset -> size of each live block
    live: BTreeMap<u64, u64>,
}

pub(crate) fn align_up(value: u64, align: u64) -> Option<u64> {
    debug_assert!(align.is_power_of_two());
    value.checked_add(align - 1).map(|v| v & !(align - 1))
}

impl FirstFitAllocator {
    pub fn new(capacity: u64) -> Self {
        let mut free = BTreeMap::new();
        if capacity > 0 {
            free.insert(0, capacity);
        }
        Self {
            capacity,
            free,
            live: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    /// Places `size` bytes at the lowest `align`-aligned offset that fits.
    pub fn alloc(&mut self, size: u64, align: u64) -> Result<u64, MemoryError> {
        if size == 0 {
            return Err(MemoryError::ZeroSize);
        }
        if align == 0 || !align.is_power_of_two() {
            return Err(MemoryError::BadAlignment(align));
        }

        let (gap_start, gap_len, offset) = self
            .free
            .iter()
            .find_map(|(&start, &len)| {
                let offset = align_up(start, align)?;
                let end = offset.checked_add(size)?;
                (end <= start + len).then_some((start, len, offset))
            })
            .ok_or(MemoryError::OutOfMemory {
                requested: size,
                align,
            })?;

        self.free.remove(&gap_start);
        if offset > gap_start {
            self.free.insert(gap_start, offset - gap_start);
        }
        let gap_end = gap_start + gap_len;
        let end = offset + size;
        if end < gap_end {
            self.free.insert(end, gap_end - end);
        }
        self.live.insert(offset, size);

        #[cfg(debug_assertions)]
        self.check_integrity();

        Ok(offset)
    }

    /// Releases the block at `offset`, which must have been returned by
    /// `alloc` with the same `size` and not freed since.
    pub fn free(&mut self, offset: u64, size: u64) -> Result<(), MemoryError> {
        match self.live.get(&offset) {
            Some(&live_size) if live_size == size => {}
            _ => return Err(MemoryError::UnknownAllocation { offset, size }),
        }
        self.live.remove(&offset);

        let mut start = offset;
        let mut len = size;

        // Merge with the gap immediately before.
        if let Some((&prev_start, &prev_len)) = self.free.range(..offset).next_back() {
            if prev_start + prev_len == offset {
                self.free.remove(&prev_start);
                start = prev_start;
                len += prev_len;
            }
        }
        // Merge with the gap immediately after.
        if let Some(next_len) = self.free.remove(&(offset + size)) {
            len += next_len;
        }
        self.free.insert(start, len);

        #[cfg(debug_assertions)]
        self.check_integrity();

        Ok(())
    }

    pub fn is_live(&self, offset: u64, size: u64) -> bool {
        self.live.get(&offset) == Some(&size)
    }

    /// Live blocks as `(offset, size)`, ascending by offset.
    pub fn live_blocks(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.live.iter().map(|(&o, &s)| (o, s))
    }

    /// Free gaps as `(offset, len)`, ascending by offset.
    pub fn free_gaps(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.free.iter().map(|(&o, &l)| (o, l))
    }

    pub fn used_bytes(&self) -> u64 {
        self.live.values().sum()
    }

    pub fn largest_gap(&self) -> u64 {
        self.free.values().copied().max().unwrap_or(0)
    }

    #[cfg(debug_assertions)]
    fn check_integrity(&self) {
        // Live blocks and free gaps tile [0, capacity) exactly, and no two
        // free gaps are adjacent.
        let mut spans: Vec<(u64, u64, bool)> = self
            .live
            .iter()
            .map(|(&o, &s)| (o, s, false))
            .chain(self.free.iter().map(|(&o, &l)| (o, l, true)))
            .collect();
        spans.sort_unstable();
        let mut cursor = 0;
        let mut prev_free = false;
        for (start, len, is_free) in spans {
            assert_eq!(start, cursor, "hole or overlap at {start}");
            assert!(len > 0);
            assert!(!(prev_free && is_free), "uncoalesced gaps at {start}");
            cursor = start + len;
            prev_free = is_free;
        }
        assert_eq!(cursor, self.capacity);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fill_then_exhaustion() {
        let mut a = FirstFitAllocator::new(131072);
        assert_eq!(a.alloc(131072, 64).unwrap(), 0);
        assert!(matches!(
            a.alloc(1, 1),
            Err(MemoryError::OutOfMemory { .. })
        ));
    }

    #[test]
    fn aligned_placement_after_small_block() {
        let mut a = FirstFitAllocator::new(131072);
        assert_eq!(a.alloc(100, 64).unwrap(), 0);
        assert_eq!(a.alloc(100, 64).unwrap(), 128);

        let mut b = FirstFitAllocator::new(131072);
        assert_eq!(b.alloc(64, 64).unwrap(), 0);
        assert_eq!(b.alloc(4096, 4096).unwrap(), 4096);
        // the [64, 4096) remainder is still usable
        assert_eq!(b.alloc(64, 64).unwrap(), 64);
    }

    #[test]
    fn reuse_after_free() {
        let mut a = FirstFitAllocator::new(1024);
        let o = a.alloc(64, 64).unwrap();
        a.free(o, 64).unwrap();
        assert_eq!(a.alloc(64, 64).unwrap(), o);
    }

    #[test]
    fn free_errors() {
        let mut a = FirstFitAllocator::new(1024);
        assert!(matches!(
            a.free(0, 64),
            Err(MemoryError::UnknownAllocation { .. })
        ));
        let o = a.alloc(64, 64).unwrap();
        assert!(a.free(o, 32).is_err());
        a.free(o, 64).unwrap();
        assert!(a.free(o, 64).is_err(), "double free must be rejected");
    }

    #[test]
    fn coalescing_restores_single_gap() {
        let mut a = FirstFitAllocator::new(4096);
        let x = a.alloc(1000, 8).unwrap();
        let y = a.alloc(1000, 8).unwrap();
        let z = a.alloc(1000, 8).unwrap();
        a.free(x, 1000).unwrap();
        a.free(z, 1000).unwrap();
        a.free(y, 1000).unwrap();
        assert_eq!(a.free_gaps().collect::<Vec<_>>(), vec![(0, 4096)]);
        assert_eq!(a.alloc(4096, 4096).unwrap(), 0);
    }

    #[test]
    fn bad_arguments() {
        let mut a = FirstFitAllocator::new(1024);
        assert!(matches!(a.alloc(0, 8), Err(MemoryError::ZeroSize)));
        assert!(matches!(a.alloc(8, 3), Err(MemoryError::BadAlignment(3))));
        assert!(matches!(a.alloc(8, 0), Err(MemoryError::BadAlignment(0))));
    }
}
