//! Fixed-layout types shared with natively compiled kernel plugins.
//!
//! A plugin exports `bb_abi_version() -> u32`, `bb_kernel_count() -> u32` and
//! `bb_kernel_get(u32) -> *const PluginKernelDescriptor`. Hosts reject any
//! plugin whose version differs from [`ABI_VERSION`].
//!
//! `PluginConfigBlock` layout, native endian, 24 bytes, no padding:
//!
//! | offset | size | field              |
//! |--------|------|--------------------|
//! | 0      | 8    | `n`                |
//! | 8      | 4    | `teams`            |
//! | 12     | 4    | `threads_per_team` |
//! | 16     | 8    | `seed`             |

use std::ffi::{c_char, c_void};

use crate::kernels::{DType, KernelConfig};

pub const ABI_VERSION: u32 = 1;

pub const ABI_VERSION_SYMBOL: &str = "bb_abi_version";
pub const KERNEL_COUNT_SYMBOL: &str = "bb_kernel_count";
pub const KERNEL_GET_SYMBOL: &str = "bb_kernel_get";

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PluginConfigBlock {
    pub n: u64,
    pub teams: u32,
    pub threads_per_team: u32,
    pub seed: u64,
}

impl From<&KernelConfig> for PluginConfigBlock {
    fn from(c: &KernelConfig) -> Self {
        PluginConfigBlock {
            n: c.n as u64,
            teams: c.teams as u32,
            threads_per_team: c.threads_per_team as u32,
            seed: c.seed,
        }
    }
}

/// Status 0 means success.
pub type PluginEntry =
    unsafe extern "C" fn(config: *const PluginConfigBlock, input: *const c_void, output: *mut c_void) -> i32;

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PluginKernelDescriptor {
    /// NUL-terminated, owned by the plugin.
    pub name: *const c_char,
    pub dtype_code: u32,
    pub entry: Option<PluginEntry>,
}

pub fn dtype_code(dtype: DType) -> u32 {
    match dtype {
        DType::F64 => 0,
        DType::F32 => 1,
        DType::I32 => 2,
    }
}

pub fn dtype_from_code(code: u32) -> Option<DType> {
    match code {
        0 => Some(DType::F64),
        1 => Some(DType::F32),
        2 => Some(DType::I32),
        _ => None,
    }
}
