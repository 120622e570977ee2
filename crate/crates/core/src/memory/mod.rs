//! Addressable regions of the platform and the two ways shared data
//! reaches the accelerator: bulk copy into device DRAM, or IOMMU page
//! mappings over host DRAM.

mod allocator;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use allocator::{FirstFitAllocator, DEFAULT_ALIGN};

use crate::runtime::CostModelParams;

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * KIB;

/// Lowest abstract address handed out to a region.
const ADDRESS_BASE: u64 = 0x1000_0000;
/// Region bases are rounded up to this granule.
const REGION_GRANULE: u64 = 4 * KIB;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RegionKind {
    HostDram,
    DevDram,
    L2Spm,
    L1Spm,
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionKind::HostDram => "host DRAM",
            RegionKind::DevDram => "device DRAM",
            RegionKind::L2Spm => "L2 SPM",
            RegionKind::L1Spm => "L1 SPM",
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemoryError {
    #[error("region size must be non-zero")]
    EmptyRegion,
    #[error("{0} region already exists")]
    DuplicateRegion(RegionKind),
    #[error("no {0} region configured")]
    MissingRegion(RegionKind),
    #[error("allocation size must be non-zero")]
    ZeroSize,
    #[error("alignment {0} is not a power of two")]
    BadAlignment(u64),
    #[error("out of device memory: no gap for {requested} bytes aligned to {align}")]
    OutOfMemory { requested: u64, align: u64 },
    #[error("no live allocation of {size} bytes at offset {offset}")]
    UnknownAllocation { offset: u64, size: u64 },
    #[error("range [{offset}, {offset}+{len}) out of bounds for {region} of {size} bytes")]
    OutOfBounds {
        region: RegionKind,
        offset: u64,
        len: u64,
        size: u64,
    },
    #[error("source and destination ranges overlap")]
    OverlappingCopy,
    #[error("page mappings must cover at least one byte")]
    EmptyMapping,
    #[error("page mappings must source host DRAM, got {0}")]
    NotHostMemory(RegionKind),
    #[error("no such page mapping")]
    UnknownMapping,
}

/// One addressable region with its functional contents.
#[derive(Clone)]
pub struct MemRegion {
    kind: RegionKind,
    base: u64,
    backing: Vec<u8>,
    allocator: FirstFitAllocator,
}

impl fmt::Debug for MemRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MemRegion")
            .field("kind", &self.kind)
            .field("base", &format_args!("{:#x}", self.base))
            .field("size", &self.size())
            .field("used", &self.allocator.used_bytes())
            .finish()
    }
}

impl MemRegion {
    pub fn kind(&self) -> RegionKind {
        self.kind
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn size(&self) -> u64 {
        self.backing.len() as u64
    }

    pub fn end(&self) -> u64 {
        self.base + self.size()
    }

    pub fn allocator(&self) -> &FirstFitAllocator {
        &self.allocator
    }

    pub fn bytes(&self) -> &[u8] {
        &self.backing
    }

    fn check_range(&self, offset: u64, len: u64) -> Result<(), MemoryError> {
        match offset.checked_add(len) {
            Some(end) if end <= self.size() => Ok(()),
            _ => Err(MemoryError::OutOfBounds {
                region: self.kind,
                offset,
                len,
                size: self.size(),
            }),
        }
    }
}

/// A live block handed out by a region's allocator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Allocation {
    pub region_kind: RegionKind,
    pub offset: u64,
    pub size: u64,
    pub alignment: u64,
}

impl Allocation {
    pub fn loc(&self) -> Loc {
        Loc::new(self.region_kind, self.offset)
    }
}

/// A byte position inside a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Loc {
    pub region: RegionKind,
    pub offset: u64,
}

impl Loc {
    pub fn new(region: RegionKind, offset: u64) -> Self {
        Self { region, offset }
    }
}

/// Host DRAM range made visible to the device through the IOMMU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PageMapping {
    /// Offset of the mapped range inside host DRAM.
    pub offset: u64,
    pub mapped_bytes: u64,
    pub page_size: u64,
    pub page_count: u64,
    pub cost_cycles: u64,
}

impl PageMapping {
    fn covers(&self, offset: u64, len: u64) -> bool {
        offset >= self.offset && offset + len <= self.offset + self.mapped_bytes
    }
}

/// Cycles the host needs to copy `nbytes`.
pub fn copy_cycles(nbytes: u64, host_copy_bytes_per_cycle: f64) -> u64 {
    if nbytes == 0 {
        return 0;
    }
    (nbytes as f64 / host_copy_bytes_per_cycle).ceil() as u64
}

pub fn page_count(nbytes: u64, page_size: u64) -> u64 {
    nbytes.div_ceil(page_size)
}

/// Cycles to create IO page-table entries covering `nbytes`.
pub fn map_cycles(nbytes: u64, page_size: u64, cycles_per_page: f64) -> u64 {
    (page_count(nbytes, page_size) as f64 * cycles_per_page).ceil() as u64
}

/// Region sizes for a full platform layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemoryLayout {
    pub l1_spm_bytes: u64,
    pub l2_spm_bytes: u64,
    pub dev_dram_bytes: u64,
    pub host_dram_bytes: u64,
}

impl Default for MemoryLayout {
    fn default() -> Self {
        Self {
            l1_spm_bytes: 128 * KIB,
            l2_spm_bytes: MIB,
            dev_dram_bytes: 64 * MIB,
            host_dram_bytes: 256 * MIB,
        }
    }
}

/// All regions of one simulated platform plus the active IOMMU mappings.
#[derive(Debug, Clone, Default)]
pub struct MemorySystem {
    regions: Vec<MemRegion>,
    mappings: Vec<PageMapping>,
}

impl MemorySystem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates every region of `layout`. Host and device DRAM are placed
    /// back to back, as two partitions of one DRAM range.
    pub fn with_layout(layout: &MemoryLayout) -> Result<Self, MemoryError> {
        let mut mem = Self::new();
        mem.region_create(RegionKind::L1Spm, layout.l1_spm_bytes)?;
        mem.region_create(RegionKind::L2Spm, layout.l2_spm_bytes)?;
        mem.region_create(RegionKind::HostDram, layout.host_dram_bytes)?;
        mem.region_create(RegionKind::DevDram, layout.dev_dram_bytes)?;
        Ok(mem)
    }

    /// Adds a zero-filled region above every existing one.
    pub fn region_create(&mut self, kind: RegionKind, size: u64) -> Result<&MemRegion, MemoryError> {
        if size == 0 {
            return Err(MemoryError::EmptyRegion);
        }
        if self.regions.iter().any(|r| r.kind == kind) {
            return Err(MemoryError::DuplicateRegion(kind));
        }
        let top = self
            .regions
            .iter()
            .map(MemRegion::end)
            .max()
            .unwrap_or(ADDRESS_BASE);
        let base = top.div_ceil(REGION_GRANULE) * REGION_GRANULE;
        self.regions.push(MemRegion {
            kind,
            base,
            backing: vec![0; size as usize],
            allocator: FirstFitAllocator::new(size),
        });
        Ok(self.regions.last().expect("just pushed"))
    }

    pub fn region(&self, kind: RegionKind) -> Result<&MemRegion, MemoryError> {
        self.regions
            .iter()
            .find(|r| r.kind == kind)
            .ok_or(MemoryError::MissingRegion(kind))
    }

    fn region_mut(&mut self, kind: RegionKind) -> Result<&mut MemRegion, MemoryError> {
        self.regions
            .iter_mut()
            .find(|r| r.kind == kind)
            .ok_or(MemoryError::MissingRegion(kind))
    }

    pub fn regions(&self) -> impl Iterator<Item = &MemRegion> {
        self.regions.iter()
    }

    pub fn alloc(&mut self, kind: RegionKind, size: u64, align: u64) -> Result<Allocation, MemoryError> {
        let offset = self.region_mut(kind)?.allocator.alloc(size, align)?;
        Ok(Allocation {
            region_kind: kind,
            offset,
            size,
            alignment: align,
        })
    }

    pub fn free(&mut self, a: &Allocation) -> Result<(), MemoryError> {
        self.region_mut(a.region_kind)?.allocator.free(a.offset, a.size)
    }

    pub fn read(&self, at: Loc, len: u64) -> Result<&[u8], MemoryError> {
        let region = self.region(at.region)?;
        region.check_range(at.offset, len)?;
        let start = at.offset as usize;
        Ok(&region.backing[start..start + len as usize])
    }

    pub fn write(&mut self, at: Loc, data: &[u8]) -> Result<(), MemoryError> {
        let region = self.region_mut(at.region)?;
        region.check_range(at.offset, data.len() as u64)?;
        let start = at.offset as usize;
        region.backing[start..start + data.len()].copy_from_slice(data);
        Ok(())
    }

    pub fn read_f64s(&self, at: Loc, out: &mut [f64]) -> Result<(), MemoryError> {
        let bytes = self.read(at, (out.len() * 8) as u64)?;
        for (dst, chunk) in out.iter_mut().zip(bytes.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        Ok(())
    }

    pub fn write_f64s(&mut self, at: Loc, values: &[f64]) -> Result<(), MemoryError> {
        let region = self.region_mut(at.region)?;
        let len = (values.len() * 8) as u64;
        region.check_range(at.offset, len)?;
        let start = at.offset as usize;
        let dst = &mut region.backing[start..start + len as usize];
        for (chunk, v) in dst.chunks_exact_mut(8).zip(values) {
            chunk.copy_from_slice(&v.to_le_bytes());
        }
        Ok(())
    }

    /// Host-driven copy of `nbytes` between two non-overlapping ranges.
    /// Returns the host cycles spent.
    pub fn bulk_copy(
        &mut self,
        src: Loc,
        dst: Loc,
        nbytes: u64,
        params: &CostModelParams,
    ) -> Result<u64, MemoryError> {
        self.region(src.region)?.check_range(src.offset, nbytes)?;
        self.region(dst.region)?.check_range(dst.offset, nbytes)?;
        if nbytes == 0 {
            return Ok(0);
        }
        if src.region == dst.region
            && src.offset < dst.offset + nbytes
            && dst.offset < src.offset + nbytes
        {
            return Err(MemoryError::OverlappingCopy);
        }

        if src.region == dst.region {
            let region = self.region_mut(src.region)?;
            let (s, d, n) = (src.offset as usize, dst.offset as usize, nbytes as usize);
            region.backing.copy_within(s..s + n, d);
        } else {
            let data = self.read(src, nbytes)?.to_vec();
            self.write(dst, &data)?;
        }
        Ok(copy_cycles(nbytes, params.host_copy_bytes_per_cycle))
    }

    /// Maps a host DRAM range for in-place device access. Nothing is
    /// copied; the mapping stays active until `unmap`.
    pub fn map_pages(
        &mut self,
        src: Loc,
        nbytes: u64,
        params: &CostModelParams,
    ) -> Result<PageMapping, MemoryError> {
        if src.region != RegionKind::HostDram {
            return Err(MemoryError::NotHostMemory(src.region));
        }
        if nbytes == 0 {
            return Err(MemoryError::EmptyMapping);
        }
        self.region(src.region)?.check_range(src.offset, nbytes)?;

        let mapping = PageMapping {
            offset: src.offset,
            mapped_bytes: nbytes,
            page_size: params.page_size,
            page_count: page_count(nbytes, params.page_size),
            cost_cycles: map_cycles(nbytes, params.page_size, params.iommu_map_cycles_per_page),
        };
        self.mappings.push(mapping);
        Ok(mapping)
    }

    pub fn unmap(&mut self, mapping: &PageMapping) -> Result<(), MemoryError> {
        let idx = self
            .mappings
            .iter()
            .position(|m| m == mapping)
            .ok_or(MemoryError::UnknownMapping)?;
        self.mappings.remove(idx);
        Ok(())
    }

    pub fn active_mappings(&self) -> &[PageMapping] {
        &self.mappings
    }

    /// Whether the accelerator may touch `[offset, offset+len)` of `region`:
    /// device-side regions always, host DRAM only through a mapping.
    pub fn device_visible(&self, at: Loc, len: u64) -> bool {
        match at.region {
            RegionKind::HostDram => self.mappings.iter().any(|m| m.covers(at.offset, len)),
            _ => true,
        }
    }
}
