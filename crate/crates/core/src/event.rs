//! Asynchronous polarity events.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("event {index} at ({x},{y}) outside {width}x{height} sensor")]
    OutOfBounds {
        index: usize,
        x: u16,
        y: u16,
        width: usize,
        height: usize,
    },
    #[error("event {index} breaks timestamp order ({t} < {prev})")]
    OutOfOrder { index: usize, t: u64, prev: u64 },
}

/// One asynchronous brightness-change measurement: pixel, microsecond
/// timestamp and polarity sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    /// Timestamp in integer microseconds.
    pub t_us: u64,
    pub x: u16,
    pub y: u16,
    /// +1 or -1.
    pub polarity: i8,
}

impl Event {
    pub fn new(t_us: u64, x: u16, y: u16, polarity: i8) -> Self {
        debug_assert!(polarity == 1 || polarity == -1);
        Self {
            t_us,
            x,
            y,
            polarity,
        }
    }

    pub fn t_seconds(&self) -> f64 {
        self.t_us as f64 * 1e-6
    }
}

/// Checks sensor bounds and non-decreasing timestamps for a whole stream.
pub fn validate_stream(events: &[Event], width: usize, height: usize) -> Result<(), EventError> {
    let mut prev = 0u64;
    for (index, e) in events.iter().enumerate() {
        if (e.x as usize) >= width || (e.y as usize) >= height {
            return Err(EventError::OutOfBounds {
                index,
                x: e.x,
                y: e.y,
                width,
                height,
            });
        }
        if e.t_us < prev {
            return Err(EventError::OutOfOrder {
                index,
                t: e.t_us,
                prev,
            });
        }
        prev = e.t_us;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_bounds_and_order() {
        let ok = vec![Event::new(0, 0, 0, 1), Event::new(5, 3, 2, -1), Event::new(5, 1, 1, 1)];
        assert!(validate_stream(&ok, 4, 3).is_ok());

        let oob = vec![Event::new(0, 4, 0, 1)];
        assert!(matches!(
            validate_stream(&oob, 4, 3),
            Err(EventError::OutOfBounds { index: 0, .. })
        ));

        let unsorted = vec![Event::new(10, 0, 0, 1), Event::new(9, 0, 0, 1)];
        assert!(matches!(
            validate_stream(&unsorted, 4, 3),
            Err(EventError::OutOfOrder { index: 1, .. })
        ));
    }
}
