"""
Subcommand implementations. Each ``cmd_*`` takes a validated PipelineConfig,
writes its outputs under ``run.out`` and returns a small summary dict.
"""
import logging
import math
import time
from typing import Dict, List, Optional

import numpy as np
import torch
from tqdm import tqdm

from .classic import fmm_bf, tv_restore
from .config import PipelineConfig
from .core import (MODE_N2N, MODE_SRED, FrameSequence, load_manifest, normalize, save_color_png,
                   save_depth_png, save_manifest, save_mask_png, variant_samples,
                   window_training_samples, write_manifest)
from .denoiser import (NetworkConfig, build_model, filter_evaluations_per_pixel, generate_targets,
                       inference_windows, infer_variant, load_weights, parameter_count, save_weights,
                       train)
from .errors import ConfigError, DataError
from .metrics import evaluate_frames, temporal_series
from .models import EpochLog, EvaluationReport, TrainingRun
from .noise_sim import corrupt_sequence
from .registration import CameraRig, build_registered_color, load_rig
from .report_utils import (BENCH_COLUMNS, TIMING_COLUMNS, plot_temporal, plot_training, write_csv,
                           write_metric_reports, write_temporal_series, write_training_log,
                           write_xlsx_report)
from .synthetic import SceneConfig, synthetic_sequence

logger = logging.getLogger(__name__)

# Linear-in-pixels scaling: accepted band for the fitted exponent and for
# the 512x512 / 256x256 time ratio (4x the pixels).
EXPONENT_BAND = (0.8, 1.3)
MAX_DOUBLING_RATIO = 4.5
EVALUATED_METHODS = ('sred', 'n2n', 'n2stack', 'fmm_bf', 'tv')
BASELINE_METHODS = ('fmm_bf', 'tv')


def _finite_or_none(value: float) -> Optional[float]:
    return value if value is not None and math.isfinite(value) else None


def _dataset_paths(cfg: PipelineConfig) -> List[str]:
    return [p.strip() for p in cfg.require('paths.dataset').split(',') if p.strip()]


def _rig_for(cfg: PipelineConfig, seq: FrameSequence) -> CameraRig:
    """Configured rig, or coincident cameras sized like the sequence."""
    if cfg['paths.rig']:
        return load_rig(cfg['paths.rig'])
    h, w = seq.depth[0].shape
    logger.info("No rig configured; using an identity rig for %dx%d frames", w, h)
    return CameraRig.identity(w, h)


# ─── register ────────────────────────────────────────────────────────────────

def cmd_register(cfg: PipelineConfig) -> Dict:
    rig = load_rig(cfg.require('paths.rig'))
    seq = load_manifest(_dataset_paths(cfg)[0])
    out = cfg.out_dir / 'registered'
    rows = []
    for pos, index in enumerate(seq.indices):
        if not seq.has_color(pos):
            raise DataError(f"frame {index} has no colour image to register")
        rc = build_registered_color(seq.depth[pos], seq.color[pos], rig, cfg.fill(),
                                    cfg['registration.eps_z'])
        color_path = out / f"registered_{index:06d}.png"
        mask_path = out / f"coverage_{index:06d}.png"
        save_color_png(rc.color, color_path)
        save_mask_png(rc.coverage, mask_path)
        rows.append({'frame_index': index, 'color': color_path.name, 'coverage': mask_path.name,
                     'coverage_fraction': float(rc.coverage.mean())})
    index_path = write_csv(out / 'registered.csv',
                           ('frame_index', 'color', 'coverage', 'coverage_fraction'), rows, cfg.seed)
    logger.info("Registered %d colour frames into %s", len(rows), out)
    return {'frames': len(rows), 'index': index_path}


# ─── make-targets ────────────────────────────────────────────────────────────

def cmd_make_targets(cfg: PipelineConfig) -> Dict:
    rig = load_rig(cfg.require('paths.rig'))
    seq = load_manifest(_dataset_paths(cfg)[0])
    samples = window_training_samples(seq)
    targets = generate_targets([seq], samples, rig, cfg.inpaint(), cfg.fill(),
                               cfg['registration.eps_z'], cfg['run.jobs'])
    out = cfg.out_dir / 'targets'
    rows = []
    for (_, pos), frame in sorted(targets.items()):
        index = seq.indices[pos]
        name = f"target_{index:06d}.png"
        save_depth_png(frame, out / name)
        rows.append((index, name, None))
    manifest = write_manifest(out / 'manifest.txt', rows, seed=cfg.seed)
    logger.info("Wrote %d inpainted targets to %s", len(rows), out)
    return {'targets': len(rows), 'manifest': manifest}


def _load_targets(path, seq: FrameSequence) -> Dict:
    positions = {index: pos for pos, index in enumerate(seq.indices)}
    targets = {}
    stored = load_manifest(path, with_color=False)
    for frame, index in zip(stored.depth, stored.indices):
        if index not in positions:
            raise DataError(f"target frame {index} is not part of the training sequence")
        targets[(0, positions[index])] = frame
    return targets


# ─── train ───────────────────────────────────────────────────────────────────

def cmd_train(cfg: PipelineConfig) -> Dict:
    tcfg = cfg.train()
    paths = _dataset_paths(cfg)
    dataset = [load_manifest(p, with_color=tcfg.mode == MODE_SRED) for p in paths]
    rig = None
    targets = None
    if tcfg.mode == MODE_SRED:
        if cfg['paths.targets']:
            if len(dataset) != 1:
                raise ConfigError("paths.targets can only be combined with a single dataset")
            targets = _load_targets(cfg['paths.targets'], dataset[0])
        else:
            rig = load_rig(cfg.require('paths.rig'))

    model = build_model(NetworkConfig.for_mode(tcfg.mode), seed=tcfg.seed)
    result = train(model, dataset, tcfg, rig, cfg.inpaint(), cfg.fill(),
                   cfg['registration.eps_z'], targets)

    out = cfg.out_dir
    weights = save_weights(result.model, out / 'weights.sredw')
    log_path = write_training_log(out / 'training_log.csv', result.history, tcfg.seed)
    write_csv(out / 'training_steps.csv', ('step', 'train_l1'),
              ({'step': i + 1, 'train_l1': v} for i, v in enumerate(result.step_losses)), tcfg.seed)
    if cfg['run.plots']:
        plot_training(out / 'training_loss.png', result.history)

    best = next((r for r in result.history if r.epoch == result.best_epoch), None)
    run = TrainingRun.objects.create(
        mode=tcfg.mode, seed=tcfg.seed, epochs=tcfg.epochs, batch_size=tcfg.batch_size,
        learning_rate=tcfg.learning_rate,
        samples=sum(len(variant_samples(len(s), tcfg.mode)) for s in dataset),
        steps=len(result.step_losses), best_epoch=result.best_epoch,
        best_val_l1=_finite_or_none(best.val_l1) if best else None,
        test_l1=_finite_or_none(result.test_l1), weights_path=str(weights),
    )
    EpochLog.objects.bulk_create([
        EpochLog(run=run, epoch=r.epoch, train_l1=r.train_l1, val_l1=_finite_or_none(r.val_l1),
                 wall_seconds=r.wall_seconds)
        for r in result.history
    ])
    return {'weights': weights, 'log': log_path, 'run_id': run.pk, 'result': result}


# ─── restore ─────────────────────────────────────────────────────────────────

def cmd_restore(cfg: PipelineConfig) -> Dict:
    model = load_weights(cfg.require('paths.weights'))
    seq = load_manifest(_dataset_paths(cfg)[0], with_color=False)
    mode = MODE_N2N if model.cfg.in_channels == 1 else MODE_SRED
    windows = inference_windows(len(seq), mode)
    if not windows:
        raise DataError(f"sequence of {len(seq)} frames is too short for restoration")
    out = cfg.out_dir / 'restored'
    max_depth = cfg['core.max_depth_mm']
    rows, timings = [], []
    for window in tqdm(windows, desc="restore", disable=None):
        start = time.perf_counter()
        restored = infer_variant(model, [seq.depth[i] for i in window], max_depth)
        wall_ms = (time.perf_counter() - start) * 1000.0
        index = seq.indices[window[-1]]
        name = f"restored_{index:06d}.png"
        save_depth_png(restored, out / name)
        rows.append((index, name, None))
        timings.append({'frame_index': index, 'wall_ms': wall_ms})
    manifest = write_manifest(out / 'manifest.txt', rows, seed=cfg.seed)
    timing = write_csv(out / 'timing.csv', TIMING_COLUMNS, timings, cfg.seed)
    logger.info("Restored %d frames, mean %.2f ms/frame", len(rows),
                float(np.mean([t['wall_ms'] for t in timings])))
    return {'frames': len(rows), 'manifest': manifest, 'timing': timing}


# ─── evaluate ────────────────────────────────────────────────────────────────

def _aligned(method: str, restored: FrameSequence, noisy: FrameSequence,
             clean: Optional[FrameSequence]):
    positions = {index: pos for pos, index in enumerate(noisy.indices)}
    missing = [i for i in restored.indices if i not in positions]
    if missing:
        raise DataError(f"{method}: frames {missing[:5]} have no matching input frame")
    picks = [positions[i] for i in restored.indices]
    ref = [clean.depth[p] for p in picks] if clean is not None else None
    return list(restored.indices), list(restored.depth), [noisy.depth[p] for p in picks], ref


def cmd_evaluate(cfg: PipelineConfig) -> Dict:
    noisy = load_manifest(_dataset_paths(cfg)[0], with_color=False)
    clean = None
    if cfg['paths.reference']:
        clean = load_manifest(cfg['paths.reference'], with_color=False)
        if clean.indices != noisy.indices:
            raise DataError(f"reference has {len(clean)} frames, input has {len(noisy)}; "
                            "frame indices must match")
    max_depth = cfg['core.max_depth_mm']
    dataset_name = cfg['evaluate.dataset_name']

    outputs = {}
    for method in EVALUATED_METHODS:
        path = cfg[f'evaluate.{method}']
        if path:
            outputs[method] = load_manifest(path, with_color=False)
        elif method in BASELINE_METHODS and cfg['evaluate.run_baselines']:
            if method == 'fmm_bf':
                frames = [fmm_bf(f, cfg['fmm.radius'], cfg.bilateral(), max_depth) for f in noisy.depth]
            else:
                frames = [tv_restore(f, cfg.tv(), max_depth) for f in noisy.depth]
            outputs[method] = FrameSequence(tuple(frames), indices=noisy.indices)
    if not outputs:
        raise ConfigError("nothing to evaluate: configure evaluate.<method> outputs or run_baselines")

    reports, series, series_indices = [], {}, {}
    if len(noisy) >= 2:
        series['input'] = temporal_series([normalize(f, max_depth) for f in noisy.depth])
        series_indices['input'] = list(noisy.indices)
    for method, restored in outputs.items():
        indices, out_frames, in_frames, ref = _aligned(method, restored, noisy, clean)
        report = evaluate_frames(method, dataset_name, indices, out_frames, in_frames, ref,
                                 cfg.metrics(), max_depth)
        reports.append(report)
        if len(out_frames) >= 2:
            series[method] = temporal_series([normalize(f, max_depth) for f in out_frames])
            series_indices[method] = indices
        if report.nmid_degenerate:
            logger.warning("%s: %d frames with degenerate NMID classification",
                           method, report.nmid_degenerate)

    out = cfg.out_dir
    csv_path = write_metric_reports(out / 'evaluation.csv', reports, cfg.seed)
    series_path = write_temporal_series(out / 'temporal_series.csv', series, series_indices, cfg.seed)
    xlsx_path = None
    if cfg['report.xlsx']:
        xlsx_path = write_xlsx_report(out / 'evaluation.xlsx', reports, cfg.seed)
    if cfg['run.plots'] and series:
        plot_temporal(out / 'temporal_analysis.png', series, series_indices)

    for report in reports:
        agg = report.aggregate()
        EvaluationReport.objects.create(
            method=report.method, dataset=report.dataset, seed=cfg.seed, frames=len(report.frames),
            mse=_finite_or_none(agg['mse']), psnr_db=_finite_or_none(agg['psnr_db']),
            ssim=_finite_or_none(agg['ssim']), nmid=_finite_or_none(agg['nmid']),
            temporal_abs=_finite_or_none(agg['temporal_abs']),
            temporal_signed=_finite_or_none(agg['temporal_signed']), csv_path=str(csv_path),
        )
    logger.info("Evaluated %d methods on %s", len(reports), dataset_name)
    return {'report': csv_path, 'series': series_path, 'xlsx': xlsx_path, 'reports': reports}


# ─── synth-noise ─────────────────────────────────────────────────────────────

def cmd_synth_noise(cfg: PipelineConfig) -> Dict:
    source = cfg['paths.reference'] or cfg.require('paths.dataset')
    clean = load_manifest(source)
    rig = _rig_for(cfg, clean)
    ncfg = cfg.noise()
    noisy = corrupt_sequence(clean, rig, ncfg)
    manifest = save_manifest(noisy, cfg.out_dir / 'noisy', seed=ncfg.seed)
    logger.info("Corrupted %d frames (seed %d)", len(noisy), ncfg.seed)
    return {'frames': len(noisy), 'manifest': manifest}


# ─── bench ───────────────────────────────────────────────────────────────────

def _fit_exponent(pixels: List[int], times: List[float]) -> float:
    if len(pixels) < 2 or len(set(pixels)) < 2:
        return math.nan
    slope, _ = np.polyfit(np.log(pixels), np.log(times), 1)
    return float(slope)


def _verdict(value: float, ok: bool) -> str:
    if math.isnan(value):
        return ''
    return 'pass' if ok else 'fail'


def cmd_bench(cfg: PipelineConfig) -> Dict:
    if cfg['paths.weights']:
        model = load_weights(cfg['paths.weights'])
    else:
        model = build_model(NetworkConfig(), seed=cfg.seed)
    model.eval()
    torch.manual_seed(cfg.seed)
    n_frames = cfg['bench.frames']
    channels = model.cfg.in_channels
    max_depth = cfg['core.max_depth_mm']

    rows = []
    for width, height in cfg.bench_resolutions():
        seq = synthetic_sequence(SceneConfig(width=width, height=height, frames=channels,
                                             seed=cfg.seed))
        frames = list(seq.depth)
        infer_variant(model, frames, max_depth)
        samples = []
        for _ in tqdm(range(n_frames), desc=f"bench {width}x{height}", disable=None):
            start = time.perf_counter()
            infer_variant(model, frames, max_depth)
            samples.append((time.perf_counter() - start) * 1000.0)
        rows.append({'resolution': f"{width}x{height}", 'width': width, 'height': height,
                     'pixels': width * height, 'frames': n_frames,
                     'mean_ms': float(np.mean(samples)), 'std_ms': float(np.std(samples))})
        logger.info("%dx%d: %.2f ms/frame", width, height, rows[-1]['mean_ms'])

    by_res = {(r['width'], r['height']): r['mean_ms'] for r in rows}
    ratio = math.nan
    if (512, 512) in by_res and (256, 256) in by_res:
        ratio = by_res[(512, 512)] / by_res[(256, 256)]
    square = [r for r in rows if r['width'] == r['height']] or rows
    exponent = _fit_exponent([r['pixels'] for r in square], [r['mean_ms'] for r in square])
    low, high = EXPONENT_BAND
    summary = {
        'exponent': exponent,
        'exponent_in_band': _verdict(exponent, low <= exponent <= high),
        'ratio_512_256': ratio,
        'ratio_within_limit': _verdict(ratio, ratio <= MAX_DOUBLING_RATIO),
        'filter_evaluations_per_pixel': filter_evaluations_per_pixel(model.cfg),
        'parameters': parameter_count(model),
    }
    out = cfg.out_dir
    bench_path = write_csv(out / 'bench.csv', BENCH_COLUMNS, rows, cfg.seed)
    summary_path = write_csv(out / 'bench_summary.csv', ('key', 'value'),
                             ({'key': k, 'value': v} for k, v in summary.items()), cfg.seed)
    logger.info("Fitted time-vs-pixels exponent %.3f", exponent)
    for key in ('exponent_in_band', 'ratio_within_limit'):
        if summary[key] == 'fail':
            logger.warning("Scaling check %s failed (exponent %.3f, 512/256 ratio %.2f)", key, exponent, ratio)
    return {'bench': bench_path, 'summary': summary_path, 'rows': rows, **summary}


COMMANDS = {
    'register': cmd_register,
    'make-targets': cmd_make_targets,
    'train': cmd_train,
    'restore': cmd_restore,
    'evaluate': cmd_evaluate,
    'synth-noise': cmd_synth_noise,
    'bench': cmd_bench,
}
