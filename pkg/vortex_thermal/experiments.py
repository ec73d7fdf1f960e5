"""Experiment runners: heralded spectrum, pump-waist sweep, iris sweep and turbulence channels.

Every runner writes its tables and a JSON manifest into one output directory. Outputs
depend only on the config (seeds included), so reruns are byte-identical.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from vortex_thermal.analysis import (
    OamSpectrum,
    ThermalFit,
    fit_thermal,
    mean_energy,
    mean_energy_truncated,
    thermal_energy,
    thermal_pdf,
)
from vortex_thermal.detection import (
    DetectorConfig,
    coherent_thermal_state,
    describe_detector,
    heralded_spectrum,
    sample_counts,
)
from vortex_thermal.errors import ConfigError
from vortex_thermal.initialization import ExperimentConfig, create_run_config
from vortex_thermal.lg_modes import GridSpec
from vortex_thermal.spdc_source import (
    JointAmplitudes,
    SourceParams,
    analytic_overlap_alpha,
    build_source,
)
from vortex_thermal.tables_util import write_manifest, write_table
from vortex_thermal.turbulence import (
    TurbulenceParams,
    ensemble_average,
    propagate_coherent,
    propagate_incoherent,
    screen_crosstalk,
)

logger = logging.getLogger(__name__)


class ExperimentGenerator:
    """Shared plumbing: run metadata, output directory, table headers, ordered worker pool."""

    kind: Sequence[str] = ()

    def __init__(self, config: ExperimentConfig, output_root: Path = Path('./runs'), max_workers: int = 1,
                 run_name: Optional[str] = None):
        """Initialize the runner for one validated config.

        Args:
            config: Validated experiment config
            output_root: Parent of the run directory when config.output_dir is not set
            max_workers: Threads used for independent sweep points, seeds and masks
            run_name: Optional label stored in the manifest
        """
        self.config = config
        self.run_config = create_run_config(config, run_name)
        self.output_dir = Path(config.output_dir) if config.output_dir else Path(output_root) / self.run_config['run_id']
        self.max_workers = max_workers
        self.outputs: List[str] = []

    def _header(self, **extra) -> Dict[str, Any]:
        header = {
            'kind': self.config.kind,
            'run_id': self.run_config['run_id'],
            'config_hash': self.run_config['config_hash'],
            'seed': self.config.seed,
            'window': self.config.window,
        }
        header.update(extra)
        return header

    def _write(self, name: str, df: pd.DataFrame, **extra) -> Path:
        path = write_table(df, self.output_dir / name, self._header(**extra))
        self.outputs.append(name)
        return path

    def _write_spectrum(self, name: str, spectrum: OamSpectrum, **extra) -> Path:
        return self._write(name, spectrum.to_table(), L_max=spectrum.L_max, **extra)

    def _fit(self, spectrum: OamSpectrum) -> ThermalFit:
        return fit_thermal(spectrum, window=self.config.window)

    def _fit_record(self, spectrum: OamSpectrum, fit: ThermalFit) -> Dict[str, Any]:
        record = fit.to_record()
        record['energy'] = mean_energy(spectrum)
        record['energy_window'] = mean_energy_truncated(spectrum, self.config.window)
        record['energy_fit'] = thermal_energy(fit.alpha)
        return record

    def _map_points(self, fn: Callable[[int, Any], Any], items: Sequence[Any]) -> List[Any]:
        """Apply fn(index, item) to every item; results keep config order."""
        indexed = list(enumerate(items))
        if self.max_workers > 1 and len(indexed) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                return list(pool.map(lambda pair: fn(*pair), indexed))
        return [fn(index, item) for index, item in indexed]

    def _source_grid(self, source: SourceParams) -> Optional[GridSpec]:
        if source.is_thermal:
            return None
        return self.config.grid.for_waist(source.collection_waist, source.L_max)

    def _idler_grid(self, idler: DetectorConfig) -> Optional[GridSpec]:
        if idler.kind != 'aperture':
            return None
        return self.config.grid.for_waist(self.config.detector.waist, self.config.source.L_max)

    def _run(self) -> Dict[str, Any]:
        raise NotImplementedError

    def run(self) -> Dict[str, Any]:
        """Execute the experiment and write the manifest; returns the manifest."""
        if self.config.kind not in self.kind:
            raise ConfigError(f"{type(self).__name__} cannot run a '{self.config.kind}' config")
        logger.info(f"Starting {self.config.kind} run {self.run_config['run_id']} -> {self.output_dir}")
        try:
            summary = self._run()
        except Exception as e:
            logger.error(f"{self.config.kind} run {self.run_config['run_id']} failed: {e}")
            raise
        manifest = {
            'run_name': self.run_config['run_name'],
            'run_id': self.run_config['run_id'],
            'config_hash': self.run_config['config_hash'],
            'seed': self.run_config['seed'],
            'kind': self.run_config['kind'],
            'config': self.run_config['config'],
            'outputs': list(self.outputs),
            'summary': summary,
        }
        write_manifest(self.output_dir / 'manifest.json', manifest)
        logger.info(f"Finished {self.config.kind} run: {len(self.outputs)} tables in {self.output_dir}")
        return manifest


class SpectrumGenerator(ExperimentGenerator):
    """Heralded signal spectrum from a source and idler detector, with Poisson counts and a thermal fit."""

    kind = ('spectrum',)

    def _run(self) -> Dict[str, Any]:
        cfg = self.config
        j = build_source(cfg.source, self._source_grid(cfg.source))
        idler = cfg.detector.to_detector(j.L_max)
        p = heralded_spectrum(j, idler, cfg.detector.waist, self._idler_grid(idler))

        measured = OamSpectrum.from_counts(sample_counts(p, cfg.counts, cfg.seed))
        fit = self._fit(measured)
        noiseless = self._fit(p)
        logger.info(f"alpha = {fit.alpha:.4f} +/- {fit.stderr_alpha:.4f} (noiseless {noiseless.alpha:.6f}), "
                    f"<E> = {mean_energy(measured):.3f}, KL to fit = {fit.kl_to_fit:.4g}")

        detector = describe_detector(idler)
        self._write('source.csv', j.to_table())
        self._write_spectrum('spectrum_model.csv', p, **detector)
        self._write_spectrum('spectrum_counts.csv', measured, counts=cfg.counts, **detector)
        self._write('fit.csv', pd.DataFrame([self._fit_record(measured, fit)]), spectrum='spectrum_counts.csv')
        self._write('fit_model.csv', pd.DataFrame([self._fit_record(p, noiseless)]), spectrum='spectrum_model.csv')
        return {
            'alpha': fit.alpha,
            'stderr': fit.stderr_alpha,
            'kl_to_fit': fit.kl_to_fit,
            'energy': mean_energy(measured),
            'energy_window': mean_energy_truncated(measured, cfg.window),
            'alpha_model': noiseless.alpha,
            'residual_model': noiseless.residual,
        }


class PumpSweepGenerator(ExperimentGenerator):
    """Overlap-model source swept through pump waists at fixed collection waist."""

    kind = ('pump-sweep',)

    def _point(self, index: int, pump_waist: float) -> Dict[str, Any]:
        cfg = self.config
        source = cfg.source.model_copy(update={'pump_waist': pump_waist})
        logger.info(f"pump waist {index + 1}/{len(cfg.pump_waists)}: w_p = {pump_waist:.4g} m")
        j = build_source(source, self._source_grid(source))
        idler = cfg.detector.to_detector(j.L_max)
        p = heralded_spectrum(j, idler, cfg.detector.waist, self._idler_grid(idler))
        measured = OamSpectrum.from_counts(sample_counts(p, cfg.counts, cfg.seed + index))
        fit = self._fit(measured)
        self._write_spectrum(f"spectrum_{index:02d}.csv", measured, pump_waist=f"{pump_waist:.6g}",
                             point_seed=cfg.seed + index)
        row = {
            'pump_waist': pump_waist,
            'alpha_analytic': analytic_overlap_alpha(pump_waist, source.collection_waist),
            'alpha_model': self._fit(p).alpha,
            'decay_residual': j.decay_residual(),
        }
        row.update(self._fit_record(measured, fit))
        return row

    def _run(self) -> Dict[str, Any]:
        cfg = self.config
        rows = self._map_points(self._point, cfg.pump_waists)
        # per-point files are appended by worker threads; the manifest lists them in sweep order
        self.outputs.sort()
        table = pd.DataFrame(rows)
        self._write('pump_sweep.csv', table, collection_waist=f"{cfg.source.collection_waist:.6g}")
        return {'pump_waist': list(table['pump_waist']), 'alpha': list(table['alpha']),
                'energy': list(table['energy'])}


class ApertureSweepGenerator(ExperimentGenerator):
    """Idler iris swept through diameters; null diameters are open (bucket) detectors."""

    kind = ('aperture-sweep',)

    def _point(self, index: int, diameter: Optional[float], j: JointAmplitudes) -> Dict[str, Any]:
        cfg = self.config
        idler = DetectorConfig.bucket() if diameter is None else DetectorConfig.aperture(diameter)
        label = 'open' if diameter is None else f"{diameter:.4g} m"
        logger.info(f"iris {index + 1}/{len(cfg.diameters)}: {label}")
        p = heralded_spectrum(j, idler, cfg.detector.waist, self._idler_grid(idler))
        measured = OamSpectrum.from_counts(sample_counts(p, cfg.counts, cfg.seed + index))
        fit = self._fit(measured)
        self._write_spectrum(f"spectrum_{index:02d}.csv", measured, point_seed=cfg.seed + index,
                             **describe_detector(idler))
        row = {
            'diameter': np.inf if diameter is None else diameter,
            'diameter_over_waist': np.inf if diameter is None else diameter / cfg.detector.waist,
            'alpha_model': self._fit(p).alpha,
        }
        row.update(self._fit_record(measured, fit))
        return row

    def _run(self) -> Dict[str, Any]:
        cfg = self.config
        j = build_source(cfg.source, self._source_grid(cfg.source))
        rows = self._map_points(lambda index, d: self._point(index, d, j), cfg.diameters)
        self.outputs.sort()
        table = pd.DataFrame(rows)
        self._write('aperture_sweep.csv', table, idler_waist=f"{cfg.detector.waist:.6g}")
        return {'diameter': [None if d is None else d for d in cfg.diameters],
                'alpha': list(table['alpha']), 'energy': list(table['energy']),
                'kl_to_fit': list(table['kl_to_fit'])}


class TurbulenceGenerator(ExperimentGenerator):
    """Thermal or coherent-thermal input sent through Kolmogorov screens.

    turbulence: thermal input, incoherent propagation, one output per seed.
    coherent-turbulence: coherent-thermal input, coherent and incoherent outputs per paired seed.
    ensemble: coherent-thermal input, single-mask outputs per seed and an n_masks ensemble average.
    """

    kind = ('turbulence', 'coherent-turbulence', 'ensemble')

    def _params(self) -> TurbulenceParams:
        turbulence = self.config.turbulence
        return TurbulenceParams(
            grid=self.config.grid.for_waist(turbulence.beam_waist, self.config.source.L_max),
            beam_waist=turbulence.beam_waist,
            strength=turbulence.strength,
            seed=self.config.seed,
            subharmonics=turbulence.subharmonics,
        )

    def _fit(self, spectrum: OamSpectrum) -> ThermalFit:
        # outputs are noiseless; the least-KL thermal fit is the one the KL columns refer to
        return fit_thermal(spectrum, window=self.config.window, method='min-kl')

    def _record(self, label: str, spectrum: OamSpectrum, **extra) -> Dict[str, Any]:
        record = {'output': label}
        record.update(extra)
        record.update(self._fit_record(spectrum, self._fit(spectrum)))
        return record

    def _seed_point(self, index: int, params: TurbulenceParams, thermal: OamSpectrum, coherent) -> List[Dict[str, Any]]:
        seed = params.seed + index
        logger.info(f"screen {index + 1}/{self.config.turbulence.n_seeds} (seed {seed})")
        matrix = screen_crosstalk(params.with_seed(seed), thermal.L_max)
        rows = []
        if self.config.kind == 'turbulence':
            out = propagate_incoherent(thermal, matrix)
            self._write_spectrum(f"spectrum_after_{index:02d}.csv", out, screen_seed=seed)
            rows.append(self._record('incoherent', out, screen_seed=seed,
                                     column_deficit=float(matrix.deficit().max())))
        else:
            out_coherent = propagate_coherent(coherent, matrix)
            self._write_spectrum(f"spectrum_after_coherent_{index:02d}.csv", out_coherent, screen_seed=seed)
            rows.append(self._record('coherent', out_coherent, screen_seed=seed,
                                     column_deficit=float(matrix.deficit().max())))
            if self.config.kind == 'coherent-turbulence':
                out = propagate_incoherent(thermal, matrix)
                self._write_spectrum(f"spectrum_after_incoherent_{index:02d}.csv", out, screen_seed=seed)
                rows.append(self._record('incoherent', out, screen_seed=seed,
                                         column_deficit=float(matrix.deficit().max())))
        return rows

    def _run(self) -> Dict[str, Any]:
        cfg = self.config
        params = self._params()
        L_max = cfg.source.L_max
        thermal = thermal_pdf(cfg.source.alpha, L_max)
        coherent = None if cfg.kind == 'turbulence' else coherent_thermal_state(cfg.source.alpha, L_max)
        header = {'strength': f"{params.strength:.6g}", 'fried_parameter': f"{params.fried_parameter:.6g}"}

        before = self._record('input', thermal, screen_seed='none')
        self._write_spectrum('spectrum_before.csv', thermal, **header)

        point_rows = self._map_points(lambda index, _: self._seed_point(index, params, thermal, coherent),
                                      range(cfg.turbulence.n_seeds))
        rows = [before] + [row for point in point_rows for row in point]

        summary: Dict[str, Any] = {'alpha_in': before['alpha'], 'kl_in': before['kl_to_fit'],
                                   'energy_in': before['energy']}
        table = pd.DataFrame(rows)
        for label in table['output'].unique():
            if label == 'input':
                continue
            subset = table[table['output'] == label]
            summary[f"median_alpha_{label}"] = float(subset['alpha'].median())
            summary[f"median_kl_{label}"] = float(subset['kl_to_fit'].median())
            summary[f"median_energy_{label}"] = float(subset['energy'].median())

        if cfg.kind == 'ensemble':
            averaged = ensemble_average(coherent, params, cfg.turbulence.n_masks, self.max_workers)
            self._write_spectrum('spectrum_ensemble.csv', averaged, n_masks=cfg.turbulence.n_masks, **header)
            ensemble_row = self._record('ensemble', averaged, screen_seed=f"{params.seed}+0..{cfg.turbulence.n_masks - 1}")
            rows.append(ensemble_row)
            table = pd.DataFrame(rows)
            summary.update({'alpha_ensemble': ensemble_row['alpha'], 'kl_ensemble': ensemble_row['kl_to_fit'],
                            'energy_ensemble': ensemble_row['energy']})

        self.outputs.sort()
        self._write('fits.csv', table, **header)
        logger.info(" ".join(f"{key}={value:.4g}" for key, value in summary.items()))
        return summary


GENERATORS = {
    'spectrum': SpectrumGenerator,
    'pump-sweep': PumpSweepGenerator,
    'aperture-sweep': ApertureSweepGenerator,
    'turbulence': TurbulenceGenerator,
    'coherent-turbulence': TurbulenceGenerator,
    'ensemble': TurbulenceGenerator,
}


def run_experiment(config: ExperimentConfig, output_root: Path = Path('./runs'), max_workers: int = 1) -> Dict[str, Any]:
    return GENERATORS[config.kind](config, output_root, max_workers).run()


def run_spectrum(config: ExperimentConfig, output_root: Path = Path('./runs'), max_workers: int = 1) -> Dict[str, Any]:
    return SpectrumGenerator(config, output_root, max_workers).run()


def run_pump_sweep(config: ExperimentConfig, output_root: Path = Path('./runs'), max_workers: int = 1) -> Dict[str, Any]:
    return PumpSweepGenerator(config, output_root, max_workers).run()


def run_aperture_sweep(config: ExperimentConfig, output_root: Path = Path('./runs'),
                       max_workers: int = 1) -> Dict[str, Any]:
    return ApertureSweepGenerator(config, output_root, max_workers).run()


def run_turbulence(config: ExperimentConfig, output_root: Path = Path('./runs'), max_workers: int = 1) -> Dict[str, Any]:
    return TurbulenceGenerator(config, output_root, max_workers).run()
