//! Simulated recording sessions with known clocks.
//!
//! A session shares one world: a pressure field (weather plus altitude
//! changes of the wearer) and, for active sessions, bursts of motion that
//! every device on the body picks up. Each device samples that world through
//! its own clock, barometer offset, noise, accelerometer orientation and
//! quantization.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::write_recording;
use crate::model::{AccelSensor, FifoReadout, Recording, SensorTrace};
use crate::truth::{AltitudeEvent, DeviceClock, DeviceTruth, GroundTruth, TemperatureDrift};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Walking, stairs, sports: frequent altitude changes and motion.
    Active,
    /// Desk or sleep: weather only, accelerometers see gravity and noise.
    Passive,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Active => "active",
            Scenario::Passive => "passive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherSpec {
    /// Spread of the session's mean pressure around 101325 Pa.
    pub baseline_sd_pa: f64,
    pub drift_sd_pa_per_h: f64,
    pub wiggles: usize,
    pub wiggle_amplitude_pa: (f64, f64),
    pub wiggle_period_s: (f64, f64),
}

impl Default for WeatherSpec {
    fn default() -> Self {
        WeatherSpec {
            baseline_sd_pa: 928.0,
            drift_sd_pa_per_h: 60.0,
            wiggles: 3,
            wiggle_amplitude_pa: (5.0, 30.0),
            wiggle_period_s: (1200.0, 14_400.0),
        }
    }
}

/// Altitude changes of the wearer as pressure steps with smooth ramps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltitudeSpec {
    pub major_per_h: f64,
    pub major_step_sd_pa: f64,
    pub major_ramp_s: (f64, f64),
    pub minor_per_h: f64,
    pub minor_step_sd_pa: f64,
    pub minor_ramp_s: (f64, f64),
}

impl Default for AltitudeSpec {
    fn default() -> Self {
        AltitudeSpec {
            major_per_h: 12.0,
            major_step_sd_pa: 500.0,
            major_ramp_s: (30.0, 300.0),
            minor_per_h: 60.0,
            minor_step_sd_pa: 30.0,
            minor_ramp_s: (5.0, 20.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarometerSpec {
    pub rate_hz: f64,
    /// Per-device absolute offset, normal with this spread and truncated at
    /// `offset_bound_pa`.
    pub offset_sd_pa: f64,
    pub offset_bound_pa: f64,
    pub noise_sd_pa: f64,
}

impl Default for BarometerSpec {
    fn default() -> Self {
        BarometerSpec { rate_hz: 10.0, offset_sd_pa: 33.0, offset_bound_pa: 44.0, noise_sd_pa: 4.0 }
    }
}

/// A sensor clocked by its own oscillator and read out through a FIFO.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeRunning {
    /// Largest relative deviation of the internal sample rate.
    pub rate_error_max: f64,
    pub readout_interval_s: f64,
    pub readout_jitter_s: f64,
    /// Delay from activation to the first sample.
    pub latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelSpec {
    pub name: String,
    pub rate_hz: f64,
    pub lsb_g: f64,
    pub range_g: f64,
    pub noise_sd_g: f64,
    pub free_running: Option<FreeRunning>,
}

impl AccelSpec {
    /// 20-bit, ±2 g, sampled on the RTC.
    pub fn high_resolution() -> Self {
        AccelSpec {
            name: "hires".into(),
            rate_hz: 128.0,
            lsb_g: 2.0 * 2.0 / (1 << 20) as f64,
            range_g: 2.0,
            noise_sd_g: 3e-4,
            free_running: None,
        }
    }

    /// 8-bit, ±2 g, internal oscillator with FIFO readouts.
    pub fn standard() -> Self {
        AccelSpec {
            name: "lowres".into(),
            rate_hz: 200.0,
            lsb_g: 2.0 * 2.0 / 256.0,
            range_g: 2.0,
            noise_sd_g: 2e-3,
            free_running: Some(FreeRunning {
                rate_error_max: 0.02,
                readout_interval_s: 0.15,
                readout_jitter_s: 0.01,
                latency_s: 0.005,
            }),
        }
    }
}

/// Shared motion bursts: windowed sums of sinusoids along gravity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    pub events_per_min: f64,
    pub amplitude_g: (f64, f64),
    pub duration_s: (f64, f64),
    pub freq_hz: (f64, f64),
    /// Per-device scaling of each burst.
    pub attenuation: (f64, f64),
    /// Largest difference in when two devices feel the same burst.
    pub jitter_s: f64,
    /// Relative size of the off-gravity component.
    pub lateral: f64,
    /// Bursts felt by a single device only, such as hand gestures.
    pub local_events_per_min: f64,
    /// Each device's delay in feeling shared bursts also wanders slowly, as
    /// an Ornstein-Uhlenbeck process with this spread and correlation time.
    pub delay_wander_sd_s: f64,
    pub delay_wander_time_s: f64,
}

impl Default for MotionSpec {
    fn default() -> Self {
        MotionSpec {
            events_per_min: 20.0,
            amplitude_g: (0.1, 0.6),
            duration_s: (0.3, 1.5),
            freq_hz: (2.0, 20.0),
            attenuation: (0.5, 1.0),
            jitter_s: 0.02,
            lateral: 0.3,
            local_events_per_min: 10.0,
            delay_wander_sd_s: 0.005,
            delay_wander_time_s: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockSpec {
    pub offset_range_s: f64,
    pub skew_range_ppm: f64,
    /// Adds a periodic temperature swing of this amplitude (°C) and period.
    pub temperature: Option<(f64, f64)>,
    pub coefficient_ppm_per_c: f64,
    /// Fixed clocks by device index; missing entries are drawn at random.
    pub explicit: Vec<DeviceClock>,
}

impl Default for ClockSpec {
    fn default() -> Self {
        ClockSpec {
            offset_range_s: 60.0,
            skew_range_ppm: 20.0,
            temperature: None,
            coefficient_ppm_per_c: 0.036,
            explicit: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub scenario: Scenario,
    pub duration_s: f64,
    pub n_devices: usize,
    pub seed: u64,
    /// Devices are switched on and off within this many seconds of the
    /// session's start and end.
    pub start_spread_s: f64,
    pub weather: WeatherSpec,
    pub altitude: AltitudeSpec,
    pub barometer: BarometerSpec,
    pub accel: Vec<AccelSpec>,
    pub motion: MotionSpec,
    pub clock: ClockSpec,
}

impl SessionConfig {
    pub fn new(scenario: Scenario, duration_s: f64, n_devices: usize, seed: u64) -> Self {
        SessionConfig {
            scenario,
            duration_s,
            n_devices,
            seed,
            start_spread_s: 10.0,
            weather: WeatherSpec::default(),
            altitude: AltitudeSpec::default(),
            barometer: BarometerSpec::default(),
            accel: vec![AccelSpec::high_resolution(), AccelSpec::standard()],
            motion: MotionSpec::default(),
            clock: ClockSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::invalid("session duration must be positive"));
        }
        if self.n_devices == 0 {
            return Err(Error::invalid("a session needs at least one device"));
        }
        if !(self.barometer.rate_hz > 0.0) || self.accel.iter().any(|a| !(a.rate_hz > 0.0)) {
            return Err(Error::invalid("sample rates must be positive"));
        }
        if !(self.start_spread_s >= 0.0) || self.start_spread_s * 2.0 >= self.duration_s {
            return Err(Error::invalid("start spread must be non-negative and well below the duration"));
        }
        for (i, a) in self.accel.iter().enumerate() {
            if self.accel[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::invalid(format!("duplicate accelerometer name {}", a.name)));
            }
        }
        Ok(())
    }
}

/// Recordings of one session and their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub recordings: Vec<Recording>,
    pub truth: GroundTruth,
}

pub fn device_id(index: usize) -> String {
    format!("dev{index}")
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd > 0.0 {
        Normal::new(0.0, sd).expect("finite spread").sample(rng)
    } else {
        0.0
    }
}

/// Event times of a Poisson process with `per_s` events per second on `[0, t)`.
fn poisson_times(rng: &mut ChaCha8Rng, per_s: f64, t: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if per_s <= 0.0 {
        return out;
    }
    let mut now = 0.0;
    loop {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        now += -u.ln() / per_s;
        if now >= t {
            return out;
        }
        out.push(now);
    }
}

struct PressureWorld {
    base: f64,
    drift_per_s: f64,
    wiggles: Vec<(f64, f64, f64)>,
    altitude: Vec<AltitudeEvent>,
}

impl PressureWorld {
    fn draw(rng: &mut ChaCha8Rng, cfg: &SessionConfig, span: f64) -> Self {
        let w = &cfg.weather;
        let base = 101_325.0 + normal(rng, w.baseline_sd_pa);
        let drift_per_s = normal(rng, w.drift_sd_pa_per_h) / 3600.0;
        let wiggles = (0..w.wiggles)
            .map(|_| {
                let amp = uniform(rng, w.wiggle_amplitude_pa);
                let period = uniform(rng, w.wiggle_period_s);
                (amp, TAU / period, rng.gen_range(0.0..TAU))
            })
            .collect();
        let mut altitude = Vec::new();
        if cfg.scenario == Scenario::Active {
            let a = &cfg.altitude;
            for (per_h, sd, ramp) in [
                (a.major_per_h, a.major_step_sd_pa, a.major_ramp_s),
                (a.minor_per_h, a.minor_step_sd_pa, a.minor_ramp_s),
            ] {
                for start_s in poisson_times(rng, per_h / 3600.0, span) {
                    let duration_s = uniform(rng, ramp);
                    altitude.push(AltitudeEvent { start_s, duration_s, delta_pa: normal(rng, sd) });
                }
            }
            altitude.sort_by(|x, y| x.start_s.total_cmp(&y.start_s));
        }
        PressureWorld { base, drift_per_s, wiggles, altitude }
    }

    fn at(&self, w: f64) -> f64 {
        let mut p = self.base + self.drift_per_s * w;
        for &(amp, k, phase) in &self.wiggles {
            p += amp * (k * w + phase).sin();
        }
        for e in &self.altitude {
            if w <= e.start_s {
                break;
            }
            let x = ((w - e.start_s) / e.duration_s).min(1.0);
            p += e.delta_pa * x * x * (3.0 - 2.0 * x);
        }
        p
    }
}

struct Burst {
    start: f64,
    duration: f64,
    amplitude: f64,
    tones: [(f64, f64, f64); 3],
}

impl Burst {
    fn value(&self, x: f64) -> f64 {
        if !(0.0..self.duration).contains(&x) {
            return 0.0;
        }
        let env = 0.5 * (1.0 - (TAU * x / self.duration).cos());
        let s: f64 = self.tones.iter().map(|&(w, f, ph)| w * (TAU * f * x + ph).sin()).sum();
        self.amplitude * env * s
    }
}

fn draw_bursts(rng: &mut ChaCha8Rng, m: &MotionSpec, span: f64) -> Vec<Burst> {
    poisson_times(rng, m.events_per_min / 60.0, span)
        .into_iter()
        .map(|start| {
            let mut weights = [rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0)];
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            Burst {
                start,
                duration: uniform(rng, m.duration_s),
                amplitude: uniform(rng, m.amplitude_g),
                tones: weights.map(|w| (w, uniform(rng, m.freq_hz), rng.gen_range(0.0..TAU))),
            }
        })
        .collect()
}

fn draw_clock(rng: &mut ChaCha8Rng, spec: &ClockSpec, index: usize) -> DeviceClock {
    let offset_s = rng.gen_range(-1.0..=1.0) * spec.offset_range_s;
    let skew = rng.gen_range(-1.0..=1.0) * spec.skew_range_ppm * 1e-6;
    let temperature = spec.temperature.map(|(amplitude_c, period_s)| TemperatureDrift {
        amplitude_c,
        period_s,
        phase: rng.gen_range(0.0..TAU),
        coefficient_ppm_per_c: spec.coefficient_ppm_per_c,
    });
    match spec.explicit.get(index) {
        Some(c) => *c,
        None => DeviceClock { offset_s, skew, temperature },
    }
}

fn quantize(v: f64, lsb: f64, range: f64) -> f64 {
    let q = (v / lsb).round() * lsb;
    q.clamp(-range, range - lsb)
}

/// How one device feels one burst.
struct Felt<'a> {
    burst: &'a Burst,
    scale: f64,
    delay: f64,
    dir: [f64; 3],
}

struct DeviceDraw {
    clock: DeviceClock,
    w_on: f64,
    w_off: f64,
    pressure_offset: f64,
    up: [f64; 3],
}

fn unit_orthogonal(rng: &mut ChaCha8Rng, u: [f64; 3]) -> [f64; 3] {
    loop {
        let r: [f64; 3] = UnitSphere.sample(rng);
        let d = r[0] * u[0] + r[1] * u[1] + r[2] * u[2];
        let v = [r[0] - d * u[0], r[1] - d * u[1], r[2] - d * u[2]];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-3 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn felt<'a>(
    rng: &mut ChaCha8Rng,
    up: [f64; 3],
    burst: &'a Burst,
    motion: &MotionSpec,
    wander: Option<f64>,
) -> Felt<'a> {
    let (scale, delay) = match wander {
        Some(w) => (uniform(rng, motion.attenuation), w + rng.gen_range(-0.5..=0.5) * motion.jitter_s),
        None => (1.0, 0.0),
    };
    let side = unit_orthogonal(rng, up);
    Felt { burst, scale, delay, dir: std::array::from_fn(|c| up[c] + motion.lateral * side[c]) }
}

fn accelerometer(rng: &mut ChaCha8Rng, spec: &AccelSpec, dev: &DeviceDraw, bursts: &[Felt]) -> Result<AccelSensor> {
    let t_on = dev.clock.device_time(dev.w_on);
    let t_off = dev.clock.device_time(dev.w_off);
    // Device-time spacing of the samples actually taken.
    let (rate, t_first) = match spec.free_running {
        None => (spec.rate_hz, t_on),
        Some(fr) => {
            let err = rng.gen_range(-1.0..=1.0) * fr.rate_error_max;
            (spec.rate_hz * (1.0 + err), t_on + fr.latency_s)
        }
    };
    let n = (((t_off - t_first) * rate).floor() as usize) + 1;
    let world: Vec<f64> = (0..n).map(|i| dev.clock.world_time(t_first + i as f64 / rate)).collect();
    let g = dev.up;
    let mut samples: Vec<[f64; 3]> = vec![g; n];
    for f in bursts {
        let start = f.burst.start + f.delay;
        let lo = world.partition_point(|&w| w < start);
        let hi = world.partition_point(|&w| w < start + f.burst.duration);
        for i in lo..hi {
            let s = f.scale * f.burst.value(world[i] - start);
            for (x, d) in samples[i].iter_mut().zip(f.dir) {
                *x += s * d;
            }
        }
    }
    let noise = Normal::new(0.0, spec.noise_sd_g.max(f64::MIN_POSITIVE)).expect("finite spread");
    for v in samples.iter_mut() {
        for c in v.iter_mut() {
            *c = quantize(*c + noise.sample(rng), spec.lsb_g, spec.range_g);
        }
    }
    let fifo_log = match spec.free_running {
        None => None,
        Some(fr) => {
            let mut log = Vec::new();
            let mut j = 1;
            loop {
                let t = t_on + j as f64 * fr.readout_interval_s + rng.gen_range(-1.0..=1.0) * fr.readout_jitter_s;
                if t > t_off {
                    break;
                }
                let count = if t < t_first { 0 } else { (((t - t_first) * rate).floor() as u64 + 1).min(n as u64) };
                log.push(FifoReadout { t_s: t, total_samples: count });
                j += 1;
            }
            if log.is_empty() {
                return Err(Error::invalid(format!("session too short for a FIFO readout of {}", spec.name)));
            }
            samples.truncate(log[log.len() - 1].total_samples as usize);
            Some(log)
        }
    };
    Ok(AccelSensor {
        name: spec.name.clone(),
        unit: "g".into(),
        externally_triggered: spec.free_running.is_none(),
        trace: SensorTrace::accel3(spec.rate_hz, t_on, samples)?,
        fifo_log,
    })
}

/// Simulates one session with `cfg.n_devices` devices recording together.
/// Identical configurations produce bit-identical output.
pub fn generate_session(cfg: &SessionConfig) -> Result<Session> {
    cfg.validate()?;
    let span = cfg.duration_s + cfg.start_spread_s;
    let mut world_rng = stream(cfg.seed, 0);
    let pressure = PressureWorld::draw(&mut world_rng, cfg, span);
    let bursts = match cfg.scenario {
        Scenario::Active => draw_bursts(&mut world_rng, &cfg.motion, span),
        Scenario::Passive => Vec::new(),
    };
    let mut recordings = Vec::with_capacity(cfg.n_devices);
    let mut devices = Vec::with_capacity(cfg.n_devices);
    for d in 0..cfg.n_devices {
        let mut rng = stream(cfg.seed, 1 + d as u64);
        let bound = cfg.barometer.offset_bound_pa;
        let pressure_offset = loop {
            let x = normal(&mut rng, cfg.barometer.offset_sd_pa);
            if x.abs() <= bound {
                break x;
            }
        };
        let dev = DeviceDraw {
            clock: draw_clock(&mut rng, &cfg.clock, d),
            w_on: rng.gen_range(0.0..=cfg.start_spread_s),
            w_off: cfg.duration_s + rng.gen_range(0.0..=cfg.start_spread_s),
            pressure_offset,
            up: UnitSphere.sample(&mut rng),
        };
        let t_on = dev.clock.device_time(dev.w_on);
        let t_off = dev.clock.device_time(dev.w_off);
        let rate = cfg.barometer.rate_hz;
        let n = ((t_off - t_on) * rate).floor() as usize + 1;
        let noise = cfg.barometer.noise_sd_pa;
        let p: Vec<f64> = (0..n)
            .map(|i| {
                let w = dev.clock.world_time(t_on + i as f64 / rate);
                pressure.at(w) + dev.pressure_offset + normal(&mut rng, noise)
            })
            .collect();
        let local = match cfg.scenario {
            Scenario::Active => {
                let m = MotionSpec { events_per_min: cfg.motion.local_events_per_min, ..cfg.motion };
                draw_bursts(&mut rng, &m, span)
            }
            Scenario::Passive => Vec::new(),
        };
        let m = &cfg.motion;
        let mut wander = normal(&mut rng, m.delay_wander_sd_s);
        let mut last = 0.0;
        let mut felt_bursts = Vec::with_capacity(bursts.len() + local.len());
        for b in &bursts {
            let decay = (-(b.start - last) / m.delay_wander_time_s).exp();
            wander = wander * decay + normal(&mut rng, m.delay_wander_sd_s * (1.0 - decay * decay).sqrt());
            last = b.start;
            felt_bursts.push(felt(&mut rng, dev.up, b, m, Some(wander)));
        }
        felt_bursts.extend(local.iter().map(|b| felt(&mut rng, dev.up, b, m, None)));
        let accel = cfg
            .accel
            .iter()
            .map(|spec| accelerometer(&mut rng, spec, &dev, &felt_bursts))
            .collect::<Result<Vec<_>>>()?;
        recordings.push(Recording {
            device_id: device_id(d),
            pressure: SensorTrace::pressure(rate, t_on, p)?,
            accel,
            applied_model: None,
        });
        devices.push(DeviceTruth { device_id: device_id(d), clock: dev.clock });
    }
    Ok(Session {
        recordings,
        truth: GroundTruth {
            scenario: cfg.scenario.name().into(),
            simultaneous: true,
            seed: cfg.seed,
            duration_s: cfg.duration_s,
            devices,
            altitude_events: pressure.altitude,
        },
    })
}

/// Two devices from independent sessions: same kind of activity, different
/// weather, altitude history and motion.
pub fn generate_nonsimultaneous_pair(cfg: &SessionConfig) -> Result<Session> {
    let pick = |k: u64| -> Result<(Recording, DeviceTruth)> {
        let mut c = cfg.clone();
        c.n_devices = 1;
        c.seed = stream(cfg.seed, 1_000_000 + k).gen();
        let s = generate_session(&c)?;
        let mut rec = s.recordings.into_iter().next().expect("one device");
        let mut truth = s.truth.devices.into_iter().next().expect("one device");
        rec.device_id = device_id(k as usize);
        truth.device_id = rec.device_id.clone();
        Ok((rec, truth))
    };
    let (ra, ta) = pick(0)?;
    let (rb, tb) = pick(1)?;
    Ok(Session {
        recordings: vec![ra, rb],
        truth: GroundTruth {
            scenario: cfg.scenario.name().into(),
            simultaneous: false,
            seed: cfg.seed,
            duration_s: cfg.duration_s,
            devices: vec![ta, tb],
            altitude_events: Vec::new(),
        },
    })
}

pub const SUMMARY_FILE: &str = "summary.txt";

/// Plain-text overview of a session's ground truth.
pub fn summary(session: &Session) -> String {
    let t = &session.truth;
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", t.scenario);
    let _ = writeln!(s, "simultaneous: {}", t.simultaneous);
    let _ = writeln!(s, "seed: {}", t.seed);
    let _ = writeln!(s, "duration: {:.1} s", t.duration_s);
    let _ = writeln!(s, "devices:");
    for (d, rec) in t.devices.iter().zip(&session.recordings) {
        let _ = writeln!(
            s,
            "  {}: clock offset {:+.3} s, skew {:+.2} ppm{}, {} pressure samples, sensors [{}]",
            d.device_id,
            d.clock.offset_s,
            d.clock.skew * 1e6,
            if d.clock.temperature.is_some() { " (temperature dependent)" } else { "" },
            rec.pressure.len(),
            rec.accel.iter().map(|a| a.name.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    let major: Vec<&AltitudeEvent> = t.altitude_events.iter().filter(|e| e.delta_pa.abs() >= 100.0).collect();
    let _ = writeln!(s, "altitude events: {} ({} of at least 100 Pa)", t.altitude_events.len(), major.len());
    for e in major {
        let _ = writeln!(
            s,
            "  t = {:.1} s: {:+.0} Pa over {:.0} s (about {:+.1} m)",
            e.start_s,
            e.delta_pa,
            e.duration_s,
            -e.delta_pa / 12.0
        );
    }
    s
}

/// Writes each recording to `<dir>/<device_id>/` plus the ground truth and
/// a summary.
pub fn write_session(session: &Session, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for rec in &session.recordings {
        write_recording(rec, &dir.join(&rec.device_id))?;
    }
    session.truth.write(dir)?;
    let path = dir.join(SUMMARY_FILE);
    std::fs::write(&path, summary(session)).map_err(|e| Error::io(&path, e))
}
