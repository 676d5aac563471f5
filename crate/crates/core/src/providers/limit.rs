use std::sync::{Condvar, Mutex};

/// Counting semaphore bounding in-flight requests to one endpoint.
#[derive(Debug)]
pub struct Semaphore {
    available: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    sem: &'a Semaphore,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Semaphore {
            available: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut available = self.available.lock().expect("semaphore poisoned");
        while *available == 0 {
            available = self.freed.wait(available).expect("semaphore poisoned");
        }
        *available -= 1;
        Permit { sem: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.sem.available.lock().expect("semaphore poisoned") += 1;
        self.sem.freed.notify_one();
    }
}
