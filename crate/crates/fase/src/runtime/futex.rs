//! Futex wait queues plus the host-side bookkeeping for the controller's
//! hard-futex mask caches.

use std::collections::{BTreeMap, VecDeque};

pub const FUTEX_WAIT: u64 = 0;
pub const FUTEX_WAKE: u64 = 1;
pub const FUTEX_PRIVATE_FLAG: u64 = 128;
pub const FUTEX_CLOCK_REALTIME: u64 = 256;
pub const FUTEX_OP_MASK: u64 = !(FUTEX_PRIVATE_FLAG | FUTEX_CLOCK_REALTIME);

/// Waiters keyed by (address-space id, virtual address).
#[derive(Default)]
pub struct FutexQueues {
    queues: BTreeMap<(u64, u64), VecDeque<u64>>,
}

impl FutexQueues {
    pub fn push(&mut self, space: u64, uaddr: u64, tid: u64) {
        self.queues.entry((space, uaddr)).or_default().push_back(tid);
    }

    pub fn wake(&mut self, space: u64, uaddr: u64, max: u64) -> Vec<u64> {
        let mut woken = Vec::new();
        if let Some(q) = self.queues.get_mut(&(space, uaddr)) {
            while woken.len() < max as usize {
                match q.pop_front() {
                    Some(t) => woken.push(t),
                    None => break,
                }
            }
            if q.is_empty() {
                self.queues.remove(&(space, uaddr));
            }
        }
        woken
    }

    pub fn remove_tid(&mut self, space: u64, uaddr: u64, tid: u64) -> bool {
        let mut removed = false;
        if let Some(q) = self.queues.get_mut(&(space, uaddr)) {
            let before = q.len();
            q.retain(|&t| t != tid);
            removed = q.len() != before;
            if q.is_empty() {
                self.queues.remove(&(space, uaddr));
            }
        }
        removed
    }

    pub fn has_waiters(&self, space: u64, uaddr: u64) -> bool {
        self.queues.contains_key(&(space, uaddr))
    }
}

/// What the host knows about each core's HFutex mask cache: virtual address
/// as matched by the controller plus the physical page recorded when the
/// mask was installed.
#[derive(Default)]
pub struct HfutexRecords {
    per_core: Vec<BTreeMap<u64, u64>>, // vaddr -> paddr
    pub installs: u64,
    pub clears: u64,
}

impl HfutexRecords {
    pub fn new(cores: usize) -> Self {
        HfutexRecords { per_core: vec![BTreeMap::new(); cores], installs: 0, clears: 0 }
    }

    pub fn is_recorded(&self, core: usize, vaddr: u64) -> bool {
        self.per_core[core].contains_key(&vaddr)
    }

    pub fn is_full(&self, core: usize) -> bool {
        self.per_core[core].len() >= crate::controller::MASK_SIZE
    }

    pub fn record(&mut self, core: usize, vaddr: u64, paddr: u64) {
        self.per_core[core].insert(vaddr, paddr);
        self.installs += 1;
    }

    /// Cores whose mask holds `vaddr` (single address space, so the virtual
    /// address identifies the futex word).
    pub fn cores_holding(&self, vaddr: u64) -> Vec<usize> {
        self.per_core
            .iter()
            .enumerate()
            .filter(|(_, m)| m.contains_key(&vaddr))
            .map(|(c, _)| c)
            .collect()
    }

    pub fn drop_vaddr(&mut self, core: usize, vaddr: u64) {
        if self.per_core[core].remove(&vaddr).is_some() {
            self.clears += 1;
        }
    }

    pub fn core_nonempty(&self, core: usize) -> bool {
        !self.per_core[core].is_empty()
    }

    pub fn clear_core(&mut self, core: usize) {
        self.clears += self.per_core[core].len() as u64;
        self.per_core[core].clear();
    }
}
