//! Dispatch of independent substep tasks under a [`Schedule`].

use std::sync::{Condvar, Mutex};

use super::config::{Schedule, Substep};

/// Publishes task results in a fixed order. A task that unwinds before its
/// turn releases everyone waiting behind it.
struct TurnStile {
    state: Mutex<(usize, bool)>,
    cv: Condvar,
}

impl TurnStile {
    fn new() -> Self {
        Self {
            state: Mutex::new((0, false)),
            cv: Condvar::new(),
        }
    }

    fn wait_for(&self, position: usize) {
        let mut guard = self.state.lock().unwrap_or_else(|e| e.into_inner());
        while guard.0 != position && !guard.1 {
            guard = self.cv.wait(guard).unwrap_or_else(|e| e.into_inner());
        }
    }

    fn advance(&self) {
        let mut guard = self.state.lock().unwrap_or_else(|e| e.into_inner());
        guard.0 += 1;
        self.cv.notify_all();
    }

    fn abort(&self) {
        let mut guard = self.state.lock().unwrap_or_else(|e| e.into_inner());
        guard.1 = true;
        self.cv.notify_all();
    }
}

struct Ticket<'a> {
    stile: &'a TurnStile,
    done: bool,
}

impl Drop for Ticket<'_> {
    fn drop(&mut self) {
        if !self.done {
            self.stile.abort();
        }
    }
}

fn in_turn<T>(stile: &TurnStile, position: usize, task: impl FnOnce() -> T, slot: &Mutex<Option<T>>) {
    let mut ticket = Ticket { stile, done: false };
    let value = task();
    stile.wait_for(position);
    *slot.lock().unwrap_or_else(|e| e.into_inner()) = Some(value);
    ticket.done = true;
    stile.advance();
}

fn take<T>(slot: Mutex<Option<T>>) -> T {
    slot.into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .expect("task finished without a result")
}

/// Runs the K, L and S tasks and returns their results in that order.
pub fn run_three<A, B, C, FA, FB, FC>(schedule: Schedule, fa: FA, fb: FB, fc: FC) -> (A, B, C)
where
    A: Send,
    B: Send,
    C: Send,
    FA: FnOnce() -> A + Send,
    FB: FnOnce() -> B + Send,
    FC: FnOnce() -> C + Send,
{
    match schedule {
        Schedule::Parallel => {
            let (a, (b, c)) = rayon::join(fa, || rayon::join(fb, fc));
            (a, b, c)
        }
        Schedule::Sequential => {
            let a = fa();
            let b = fb();
            (a, b, fc())
        }
        Schedule::CompletionOrder(order) => {
            let pos = |task: Substep| order.iter().position(|&x| x == task).expect("validated permutation");
            let stile = TurnStile::new();
            let (sa, sb, sc) = (Mutex::new(None), Mutex::new(None), Mutex::new(None));
            std::thread::scope(|scope| {
                scope.spawn(|| in_turn(&stile, pos(Substep::K), fa, &sa));
                scope.spawn(|| in_turn(&stile, pos(Substep::L), fb, &sb));
                scope.spawn(|| in_turn(&stile, pos(Substep::S), fc, &sc));
            });
            (take(sa), take(sb), take(sc))
        }
    }
}

/// Runs the K and L tasks; a completion order is restricted to those two.
pub fn run_two<A, B, FA, FB>(schedule: Schedule, fa: FA, fb: FB) -> (A, B)
where
    A: Send,
    B: Send,
    FA: FnOnce() -> A + Send,
    FB: FnOnce() -> B + Send,
{
    match schedule {
        Schedule::Parallel => rayon::join(fa, fb),
        Schedule::Sequential => {
            let a = fa();
            (a, fb())
        }
        Schedule::CompletionOrder(order) => {
            let two: Vec<Substep> = order.iter().copied().filter(|&x| x != Substep::S).collect();
            let pos = |task: Substep| two.iter().position(|&x| x == task).expect("validated permutation");
            let stile = TurnStile::new();
            let (sa, sb) = (Mutex::new(None), Mutex::new(None));
            std::thread::scope(|scope| {
                scope.spawn(|| in_turn(&stile, pos(Substep::K), fa, &sa));
                scope.spawn(|| in_turn(&stile, pos(Substep::L), fb, &sb));
            });
            (take(sa), take(sb))
        }
    }
}
