//! Signal bookkeeping. Delivery redirects the thread to a preloaded
//! trampoline that calls the registered handler and then raises
//! rt_sigreturn; the saved frame is restored there. One nesting level:
//! further signals stay pending until the frame is consumed.

use std::collections::BTreeMap;

pub const SIGKILL: u8 = 9;

/// Signals whose Linux default action is to ignore.
pub fn default_ignored(sig: u8) -> bool {
    matches!(sig, 17 | 23 | 28) // SIGCHLD, SIGURG, SIGWINCH
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SigAction {
    pub handler: u64,
    pub flags: u64,
    pub mask: u64,
}

#[derive(Default)]
pub struct SignalTable {
    actions: BTreeMap<u8, SigAction>,
}

impl SignalTable {
    pub fn set(&mut self, sig: u8, act: SigAction) -> SigAction {
        let old = self.get(sig);
        if act.handler == 0 {
            self.actions.remove(&sig);
        } else {
            self.actions.insert(sig, act);
        }
        old
    }

    pub fn get(&self, sig: u8) -> SigAction {
        self.actions.get(&sig).copied().unwrap_or_default()
    }
}

/// Register image captured when a handler preempts the thread, along with
/// the signal mask to restore at sigreturn.
#[derive(Debug, Clone)]
pub struct SavedFrame {
    pub regs: [u64; 32],
    pub pc: u64,
    pub mask: u64,
}
