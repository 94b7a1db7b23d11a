//! Allocator settings for training workloads.
//!
//! Every epoch allocates and frees many multi-megabyte tensors. With glibc's
//! default thresholds each of them is a fresh `mmap`, so the kernel spends
//! as long zeroing pages as the run spends computing. Raising the mmap and
//! trim thresholds keeps those blocks on the heap for reuse.

use std::sync::Once;

/// Applies the settings once per process; a no-op off glibc.
pub fn configure() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        #[cfg(all(target_os = "linux", target_env = "gnu"))]
        // SAFETY: mallopt only adjusts allocator parameters and is called
        // before the large allocations it affects.
        unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, 256 << 20);
            libc::mallopt(libc::M_TRIM_THRESHOLD, 1 << 30);
        }
    });
}
