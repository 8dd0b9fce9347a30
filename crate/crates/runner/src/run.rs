//! Fixed-step scenario execution and output tree writing.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use seasim::annotation::{point_cloud, segmentation, write_class_names, write_point_cloud, write_yolo_labels};
use seasim::comms::write_message_log;
use seasim::event_camera::{encode_events_binary, write_events_text};
use seasim::io::{encode_raw_grid, to_u16_ids, to_u8, write_gray16, write_gray8, write_rgb8};

use crate::config::{Scenario, SensorKind};
use crate::error::{RunError, RunResult};
use crate::sim::{annotation_boxes, SensorFrame, Sim};

/// Fan image height in pixels for sonar display output.
const FAN_HEIGHT: usize = 256;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub frames: u64,
    /// Paths relative to the output directory.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub duration: f64,
    pub base_dt: f64,
    pub ticks: u64,
    pub sensors: BTreeMap<String, OutputRecord>,
    pub thrusters: BTreeMap<String, OutputRecord>,
    pub tethers: BTreeMap<String, OutputRecord>,
    pub comms: Option<OutputRecord>,
    /// Set when the run aborted; lists what went wrong.
    pub error: Option<String>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn all_files(&self) -> impl Iterator<Item = &String> {
        self.sensors
            .values()
            .chain(self.thrusters.values())
            .chain(self.tethers.values())
            .chain(self.comms.iter())
            .flat_map(|r| r.files.iter())
    }
}

struct Writer {
    root: PathBuf,
}

impl Writer {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn dir(&self, rel: &str) -> RunResult<()> {
        let p = self.path(rel);
        fs::create_dir_all(&p).map_err(|e| RunError::io(p, e))
    }

    fn bytes(&self, rel: &str, data: &[u8], rec: &mut OutputRecord) -> RunResult<()> {
        let p = self.path(rel);
        fs::write(&p, data).map_err(|e| RunError::io(p, e))?;
        rec.files.push(rel.to_string());
        Ok(())
    }

    fn with<F>(&self, rel: &str, rec: &mut OutputRecord, f: F) -> RunResult<()>
    where
        F: FnOnce(&Path) -> RunResult<()>,
    {
        f(&self.path(rel))?;
        rec.files.push(rel.to_string());
        Ok(())
    }

    fn text<F>(&self, rel: &str, rec: &mut OutputRecord, f: F) -> RunResult<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> RunResult<()>,
    {
        let p = self.path(rel);
        let file = File::create(&p).map_err(|e| RunError::io(&p, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| RunError::io(&p, e))?;
        rec.files.push(rel.to_string());
        Ok(())
    }
}

struct FrameCtx<'a> {
    name: &'a str,
    index: usize,
    stem: String,
    t: f64,
}

fn write_frame(w: &Writer, sc: &Scenario, ctx: &FrameCtx<'_>, frame: &SensorFrame, rec: &mut OutputRecord) -> RunResult<()> {
    let (name, idx, stem) = (ctx.name, ctx.index, ctx.stem.as_str());
    let base = format!("{name}/{stem}");
    match frame {
        SensorFrame::Camera(b) => {
            w.bytes(&format!("{base}_depth.raw"), &encode_raw_grid(b.width, b.height, &b.depth), rec)?;
            w.bytes(&format!("{base}_range.raw"), &encode_raw_grid(b.width, b.height, &b.range), rec)?;
            let white = b.luminance.iter().copied().fold(0.0f64, f64::max).max(1e-12);
            let lum: Vec<u8> = b.luminance.iter().map(|&l| to_u8(l, white)).collect();
            w.with(&format!("{base}_luminance.png"), rec, |p| Ok(write_gray8(p, b.width, b.height, &lum)?))?;
            w.with(&format!("{base}_instance.png"), rec, |p| {
                Ok(write_gray16(p, b.width, b.height, &to_u16_ids(&b.instance_id))?)
            })?;
            w.with(&format!("{base}_class.png"), rec, |p| Ok(write_gray16(p, b.width, b.height, &to_u16_ids(&b.class_id))?))?;
        }
        SensorFrame::Thermal(img) => {
            w.bytes(&format!("{base}.raw"), &encode_raw_grid(img.width, img.height, &img.temperatures), rec)?;
            w.with(&format!("{base}.png"), rec, |p| Ok(write_rgb8(p, img.width, img.height, &img.display)?))?;
        }
        SensorFrame::Sonar(img) => {
            let SensorKind::Sonar(cfg) = &sc.sensors[idx].kind else { unreachable!("sonar frame from a sonar sensor") };
            w.with(&format!("{base}.png"), rec, |p| Ok(write_gray8(p, img.num_beams, img.num_bins, &img.to_gray8())?))?;
            w.bytes(&format!("{base}.raw"), &img.to_raw_grid(), rec)?;
            let (fw, fh, fan) = img.to_fan_gray8(cfg, FAN_HEIGHT);
            w.with(&format!("{base}_fan.png"), rec, |p| Ok(write_gray8(p, fw, fh, &fan)?))?;
        }
        SensorFrame::Events(events) => {
            w.text(&format!("{base}.txt"), rec, |f| write_events_text(events, f).map_err(|e| RunError::io(&base, e)))?;
            w.bytes(&format!("{base}.bin"), &encode_events_binary(events), rec)?;
        }
        SensorFrame::Flow(flow) => {
            w.bytes(&format!("{base}.raw"), &flow.to_raw_grid(), rec)?;
            w.with(&format!("{base}.png"), rec, |p| Ok(flow.write_png(p)?))?;
        }
        SensorFrame::Annotation(b) => {
            let boxes = annotation_boxes(&sc.sensors[idx], b);
            w.text(&format!("{base}.txt"), rec, |f| Ok(write_yolo_labels(&boxes, f)?))?;
            let masks = segmentation(b);
            masks.write_pngs(&w.path(name), stem)?;
            for plane in ["semantic", "instance", "panoptic"] {
                rec.files.push(format!("{base}_{plane}.png"));
            }
            let SensorKind::Annotation { intrinsics, .. } = &sc.sensors[idx].kind else {
                unreachable!("annotation frame from an annotation sensor")
            };
            let cloud = point_cloud(b, intrinsics);
            w.text(&format!("{base}.xyz"), rec, |f| Ok(write_point_cloud(&cloud, f)?))?;
        }
        SensorFrame::Usbl(fix) => {
            w.text(&format!("{base}.csv"), rec, |f| {
                let t = ctx.t;
                let line = match fix {
                    Some(x) => format!("t,valid,range,bearing,elevation\n{t},1,{},{},{}\n", x.range, x.bearing, x.elevation),
                    None => format!("t,valid,range,bearing,elevation\n{t},0,,,\n"),
                };
                f.write_all(line.as_bytes()).map_err(|e| RunError::io(&base, e))
            })?;
        }
    }
    Ok(())
}

/// Runs `scenario` to completion and writes its outputs under `out_dir`.
///
/// Tick `k` covers time `k * base_dt` for `k` in `[0, tick_count)`. Each tick the
/// dynamics advance first (from tick 1 on), then the comm scheduler is serviced,
/// then every due sensor fires in declaration order against the same snapshot.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path, seed: u64) -> RunResult<RunManifest> {
    let started = Instant::now();
    let mut manifest = RunManifest {
        config_hash: scenario.config_hash.clone(),
        seed,
        duration: scenario.duration,
        base_dt: scenario.base_dt,
        ticks: scenario.tick_count(),
        sensors: BTreeMap::new(),
        thrusters: BTreeMap::new(),
        tethers: BTreeMap::new(),
        comms: None,
        error: None,
        wall_clock_seconds: 0.0,
    };
    let result = execute(scenario, out_dir, seed, &mut manifest);
    if let Err(e) = &result {
        manifest.error = Some(format!("run aborted, outputs are partial: {e}"));
        manifest.sensors.values_mut().chain(manifest.tethers.values_mut()).for_each(|r| {
            r.files.retain(|f| out_dir.join(f).exists());
        });
    }
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let mp = out_dir.join("manifest.json");
    fs::create_dir_all(out_dir).map_err(|e| RunError::io(out_dir, e))?;
    fs::write(&mp, text + "\n").map_err(|e| RunError::io(&mp, e))?;
    result.map(|_| manifest)
}

fn execute(sc: &Scenario, out_dir: &Path, seed: u64, manifest: &mut RunManifest) -> RunResult<()> {
    let w = Writer { root: out_dir.to_path_buf() };
    w.dir("")?;
    let mut sim = Sim::new(sc, seed)?;
    for s in sc.sensors.iter().filter(|s| sc.output_enabled(s)) {
        w.dir(&s.name)?;
        let rec = manifest.sensors.entry(s.name.clone()).or_default();
        if matches!(s.kind, SensorKind::Annotation { .. }) {
            w.text(&format!("{}/classes.txt", s.name), rec, |f| Ok(write_class_names(&sc.classes, f)?))?;
        }
    }
    for t in &sc.tethers {
        w.dir(&format!("tethers/{}", t.name))?;
    }
    let mut thruster_rows: Vec<String> = sc.thrusters.iter().map(|_| "t,input,omega,thrust,torque\n".to_string()).collect();
    for tick in 0..manifest.ticks {
        if tick > 0 {
            sim.advance()?;
        }
        let snap = sim.snapshot()?;
        for (i, r) in sim.thruster_readings.iter().enumerate() {
            thruster_rows[i].push_str(&format!("{},{},{},{},{}\n", snap.t, r.input, r.omega, r.thrust, r.torque));
        }
        for (i, spec) in sc.tethers.iter().enumerate() {
            if tick % spec.ticks_per_frame == 0 {
                let frame = tick / spec.ticks_per_frame;
                let rec = manifest.tethers.entry(spec.name.clone()).or_default();
                let state = &sim.tethers[i];
                w.text(&format!("tethers/{}/{frame:06}.csv", spec.name), rec, |f| Ok(state.write_csv(f)?))?;
                rec.frames += 1;
            }
        }
        sim.service_comms(&snap)?;
        for (i, spec) in sc.sensors.iter().enumerate() {
            if !spec.enabled || tick % spec.ticks_per_frame != 0 {
                continue;
            }
            let frame_index = tick / spec.ticks_per_frame;
            let frame = sim.sense(i, &snap, frame_index)?;
            if !sc.output_enabled(spec) {
                continue;
            }
            let rec = manifest.sensors.get_mut(&spec.name).expect("record created");
            let ctx = FrameCtx { name: &spec.name, index: i, stem: format!("{frame_index:06}"), t: snap.t };
            write_frame(&w, sc, &ctx, &frame, rec)?;
            rec.frames += 1;
        }
    }
    if !sc.thrusters.is_empty() {
        w.dir("thrusters")?;
    }
    for (spec, rows) in sc.thrusters.iter().zip(&thruster_rows) {
        let rec = manifest.thrusters.entry(spec.name.clone()).or_default();
        w.bytes(&format!("thrusters/{}.csv", spec.name), rows.as_bytes(), rec)?;
        rec.frames = manifest.ticks;
    }
    if let Some(sched) = &sim.scheduler {
        w.dir("comms")?;
        let mut rec = OutputRecord { frames: sched.log().len() as u64, files: Vec::new() };
        w.text("comms/messages.csv", &mut rec, |f| Ok(write_message_log(sched.log(), f)?))?;
        manifest.comms = Some(rec);
    }
    Ok(())
}
