#!/usr/bin/env python3
"""
dpa - Zertifizierte Robustheit gegen Data Poisoning (DPA / SS-DPA)

Verwendung:
    dpa ingest train-images.idx3-ubyte --labels train-labels.idx1-ubyte -o train.dpad
    dpa train --config lauf.env
    dpa certify runs/mnist-ssdpa
    dpa curve runs/mnist-ssdpa --xlsx kurve.xlsx
    dpa verify --config toy.env --threat label-flip --sample 0
    dpa ra-compare 60000 50 200
    dpa binary2means --config mnist.env --class-a 1 --class-b 7
"""

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace

from dotenv import load_dotenv

from binary_cluster import run_binary_experiment
from config import RunConfig, cache_dir, default_workers, load_config, log_level, save_config
from dataset import DATASET_FORMATS, equalize_dataset, load_dataset, save_dataset, verify_unique_samples
from ensemble import (
    Certificate,
    Ensemble,
    curve_from_certificates,
    evaluate,
    median_certified_robustness,
    train_ensemble,
)
from errors import ConfigError, DPAError, EnumerationCapExceeded, InvalidArgumentError, StaleArtifactError
from learners import feature_map_from_bytes, feature_map_to_bytes, model_from_bytes
from partitioning import Strategy, make_plan, read_plan, write_plan
from report import (
    export_curve_excel,
    read_certificates,
    write_certificates,
    write_curve,
    write_json,
)
from store import ArtifactStore, check_input_hashes, get_path_hash, load_manifest, save_manifest
from verification import (
    dpa_poison_bound,
    exhaustive_label_flip_verify,
    exhaustive_removal_verify,
    insertion_adversary_verify,
    ra_poison_prob,
    required_vote_gap,
    run_pipeline,
)

load_dotenv()

logger = logging.getLogger('dpa')

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_COUNTEREXAMPLE = 2
EXIT_REFUSED = 3

MANIFEST_FILE = 'manifest.json'
CONFIG_FILE = 'config.env'
PLAN_FILE = 'plan.json'
PLAN_SIDECAR = 'plan.bin'
FEATURE_MAP_FILE = 'feature_map.npz'
CERTIFICATES_FILE = 'certificates.jsonl'
CURVE_FILE = 'curve.csv'
SUMMARY_FILE = 'summary.json'


def status(args, message):
    """Statuszeile für Menschen; stdout bleibt für JSON frei."""
    if not args.quiet:
        print(message, file=sys.stderr)


def print_json(data):
    print(json.dumps(data, ensure_ascii=False, indent=2))


# =============================================================================
# Konfiguration und Daten
# =============================================================================

OVERRIDES = {
    'train': 'train_path', 'train_labels': 'train_labels_path', 'train_format': 'train_format',
    'test': 'test_path', 'test_labels': 'test_labels_path', 'test_format': 'test_format',
    'k': 'k', 'strategy': 'strategy', 'learner': 'learner', 'feature_map': 'feature_map',
    'output_dir': 'output_dir', 'equalize': 'equalize', 'merge_labels': 'merge_labels',
}

PATH_FIELDS = ('train_path', 'train_labels_path', 'test_path', 'test_labels_path')


def add_config_arguments(parser):
    parser.add_argument('--config', '-c', help='Konfigurationsdatei (KEY=value)')
    parser.add_argument('--train', help='Trainingsdaten (überschreibt TRAIN_PATH)')
    parser.add_argument('--train-labels', help='IDX-Labeldatei der Trainingsdaten')
    parser.add_argument('--train-format', choices=DATASET_FORMATS)
    parser.add_argument('--test', help='Testdaten (überschreibt TEST_PATH)')
    parser.add_argument('--test-labels', help='IDX-Labeldatei der Testdaten')
    parser.add_argument('--test-format', choices=DATASET_FORMATS)
    parser.add_argument('--k', type=int, help='Anzahl Partitionen')
    parser.add_argument('--strategy', choices=[s.value for s in Strategy])
    parser.add_argument('--learner')
    parser.add_argument('--feature-map')
    parser.add_argument('--output-dir', help='Ausgabeordner des Laufs')
    parser.add_argument('--equalize', action='store_true', default=None,
                        help='Histogramm-Equalisierung vor dem Training')
    parser.add_argument('--merge-labels', action='store_true', default=None,
                        help='Mehrfach gelabelte Merkmalsvektoren als ein Sample behandeln')


def resolve_config(args):
    config = load_config(args.config) if args.config else RunConfig()
    changes = {
        field: getattr(args, name) for name, field in OVERRIDES.items()
        if getattr(args, name, None) is not None
    }
    changes['workers'] = args.workers
    return absolute_paths(replace(config, **changes))


def absolute_paths(config):
    """Eingabepfade absolut, damit Manifest und config.env von überall gelten."""
    paths = {name: os.path.abspath(getattr(config, name)) for name in PATH_FIELDS if getattr(config, name)}
    return replace(config, **paths)


def load_split(config, split, num_classes=None):
    path = getattr(config, f'{split}_path')
    if not path:
        raise ConfigError({f'{split}_path': "fehlt"})

    d = load_dataset(
        path,
        fmt=getattr(config, f'{split}_format'),
        labels_path=getattr(config, f'{split}_labels_path') or None,
        num_classes=num_classes or config.num_classes or None,
        header=config.header,
        csv_format=config.csv_format or None,
    )
    if config.equalize:
        d = equalize_dataset(d)
    return d


def input_files(config, split):
    return [p for p in (getattr(config, f'{split}_path'), getattr(config, f'{split}_labels_path')) if p]


# =============================================================================
# Artefakte
# =============================================================================

def run_path(run_dir, name):
    return os.path.join(run_dir, name)


def load_ensemble(run_dir, store):
    """Lädt ein trainiertes Ensemble und prüft, dass nichts veraltet ist."""
    manifest_path = run_path(run_dir, MANIFEST_FILE)
    if not os.path.exists(manifest_path):
        raise StaleArtifactError(f"Kein Manifest in {run_dir} - zuerst 'dpa train' ausführen")
    manifest = load_manifest(manifest_path)
    check_input_hashes(manifest)

    plan = read_plan(run_path(run_dir, PLAN_FILE), run_path(run_dir, PLAN_SIDECAR))
    if plan.plan_hash() != manifest['plan_hash']:
        raise StaleArtifactError("Plan passt nicht zum Manifest")

    shared = None
    if manifest['shared_feature_map']:
        with open(run_path(run_dir, FEATURE_MAP_FILE), 'rb') as f:
            shared = feature_map_from_bytes(f.read())
        if shared.fingerprint != manifest['provenance']['feature_map']:
            raise StaleArtifactError("Feature-Map passt nicht zum Manifest")

    models = []
    for i, key in enumerate(manifest['model_keys']):
        blob = store.get(key)
        fmap = shared
        if fmap is None:
            fmap_blob = store.get(key, kind='fmaps')
            fmap = feature_map_from_bytes(fmap_blob) if fmap_blob is not None else None
        if blob is None or fmap is None:
            raise StaleArtifactError(f"Modell {i} fehlt im Cache {store.root} - 'dpa train' erneut ausführen")
        models.append(model_from_bytes(blob, fmap))

    e = Ensemble(
        models=tuple(models), plan=plan, fmap=shared,
        num_classes=manifest['num_classes'], provenance=manifest['provenance'],
    )
    return e, manifest


# =============================================================================
# Befehle
# =============================================================================

def cmd_ingest(args):
    d = load_dataset(
        args.path, fmt=args.format, labels_path=args.labels,
        num_classes=args.num_classes, header=args.header,
    )
    if args.equalize:
        d = equalize_dataset(d)
    report = verify_unique_samples(d)

    if args.output:
        save_dataset(d, args.output)
        status(args, f"💾 Container geschrieben: {args.output}")

    status(args, f"📄 {d.m} Samples, Dimension {d.dim}, {d.num_classes} Klassen")
    if not report.ok:
        status(args, f"⚠️  {len(report.collisions)} Merkmalsvektoren mit mehreren Labels")

    print_json({
        'm': d.m,
        'dim': d.dim,
        'num_classes': d.num_classes,
        'content_hash': d.content_hash,
        'unique_samples': report.ok,
        'collisions': len(report.collisions),
    })
    return EXIT_OK


def cmd_train(args):
    config = resolve_config(args)
    run_dir = config.output_dir
    os.makedirs(run_dir, exist_ok=True)
    store = ArtifactStore(cache_dir(args.cache_dir))

    status(args, f"\n📁 Lade Trainingsdaten: {config.train_path}")
    d = load_split(config, 'train')
    status(args, f"📄 {d.m} Samples, {d.num_classes} Klassen")
    if config.k > d.m:
        logger.warning("k=%d ist größer als m=%d, einige Partitionen bleiben leer", config.k, d.m)

    plan = make_plan(d, config.k, config.strategy, merge_labels=config.merge_labels)
    sizes = plan.partition_sizes()
    status(args, f"🧩 {plan.k} Partitionen ({plan.strategy.value}), Größe {sizes.min()}-{sizes.max()}")

    started = time.perf_counter()
    e = train_ensemble(
        d, plan, config.learner_config(), config.feature_map_config(),
        workers=config.workers, store=store, progress=not args.quiet,
    )
    elapsed = time.perf_counter() - started
    status(args, f"✅ {e.stats['trained']} Modelle trainiert, {e.stats['cached']} aus dem Cache ({elapsed:.1f}s)")

    write_plan(plan, run_path(run_dir, PLAN_FILE), run_path(run_dir, PLAN_SIDECAR))
    if e.fmap is not None:
        with open(run_path(run_dir, FEATURE_MAP_FILE), 'wb') as f:
            f.write(feature_map_to_bytes(e.fmap))
    save_config(config, run_path(run_dir, CONFIG_FILE))

    manifest = {
        'config': config.to_dict(),
        'config_hash': config.config_hash(),
        'input_hashes': {path: get_path_hash(path) for path in input_files(config, 'train')},
        'dataset_hash': d.content_hash,
        'plan_hash': plan.plan_hash(),
        'num_classes': d.num_classes,
        'k': plan.k,
        'strategy': plan.strategy.value,
        'partition_sizes': sizes.tolist(),
        'provenance': e.provenance,
        'shared_feature_map': e.fmap is not None,
        'model_keys': e.stats['model_keys'],
    }
    save_manifest(run_path(run_dir, MANIFEST_FILE), manifest)
    status(args, f"💾 Manifest gespeichert: {run_path(run_dir, MANIFEST_FILE)}")

    print_json({'run_dir': run_dir, 'k': plan.k, 'trained': e.stats['trained'], 'cached': e.stats['cached']})
    return EXIT_OK


def cmd_certify(args):
    store = ArtifactStore(cache_dir(args.cache_dir))
    e, manifest = load_ensemble(args.run_dir, store)
    config = load_config(run_path(args.run_dir, CONFIG_FILE))
    if args.test:
        config = replace(config, test_path=args.test, test_labels_path=args.test_labels or '',
                         test_format=args.test_format or config.test_format)
        config = absolute_paths(config)

    status(args, f"📁 Lade Testdaten: {config.test_path}")
    test = load_split(config, 'test', num_classes=e.num_classes)

    rho_max = args.rho_max if args.rho_max is not None else config.effective_rho_max
    evaluation = evaluate(e, test, rho_max=rho_max)
    summary = evaluation.summary(e)

    out_dir = args.output or args.run_dir
    os.makedirs(out_dir, exist_ok=True)
    certificates_path = os.path.abspath(run_path(out_dir, CERTIFICATES_FILE))
    write_certificates(certificates_path, evaluation.certificates, evaluation.labels)
    write_curve(run_path(out_dir, CURVE_FILE), evaluation.curve)
    write_json(run_path(out_dir, SUMMARY_FILE), summary)

    manifest['certify'] = {
        'test_input_hashes': {path: get_path_hash(path) for path in input_files(config, 'test')},
        'certificates': certificates_path,
        'certificates_hash': get_path_hash(certificates_path),
        'rho_max': rho_max,
    }
    save_manifest(run_path(args.run_dir, MANIFEST_FILE), manifest)

    status(args, f"✅ {len(evaluation.certificates)} Zertifikate geschrieben: {certificates_path}")
    status(args, f"📊 Genauigkeit {summary['clean_accuracy']:.4f}, "
                 f"Median-Robustheit {summary['median_certified_robustness']}")
    print_json(summary)
    return EXIT_OK


def cmd_curve(args):
    manifest = load_manifest(run_path(args.run_dir, MANIFEST_FILE))
    certify_info = manifest.get('certify')
    if not certify_info:
        raise StaleArtifactError("Keine Zertifikate vorhanden - zuerst 'dpa certify' ausführen")
    check_input_hashes({'input_hashes': {certify_info['certificates']: certify_info['certificates_hash']}})

    rows = read_certificates(certify_info['certificates'])
    certificates = [Certificate(r['predicted'], tuple(r['counts']), r['rho_bar']) for r in rows]
    labels = [r['true_label'] for r in rows]

    rho_max = args.rho_max if args.rho_max is not None else manifest['k'] // 2
    threat = Strategy(manifest['strategy']).threat
    curve = curve_from_certificates(certificates, labels, rho_max, threat)
    median = median_certified_robustness(curve)

    summary = {
        'clean_accuracy': curve.clean_accuracy,
        'median_certified_robustness': median if median is not None else 'N/A',
        'k': manifest['k'],
        'strategy': manifest['strategy'],
        'threat': threat,
    }
    summary_path = run_path(args.run_dir, SUMMARY_FILE)
    if os.path.exists(summary_path):
        with open(summary_path, 'r', encoding='utf-8') as f:
            summary['base_classifier_accuracy'] = json.load(f).get('base_classifier_accuracy')

    write_curve(args.output or run_path(args.run_dir, CURVE_FILE), curve)
    if args.xlsx:
        export_curve_excel(curve, summary, args.xlsx)
        status(args, f"\n📊 Excel exportiert: {args.xlsx}")

    print_json({'points': [list(p) for p in curve.points], **summary})
    return EXIT_OK


def cmd_verify(args):
    config = resolve_config(args)
    cap = args.cap if args.cap is not None else config.enumeration_cap
    pipeline = config.pipeline_config()

    train = load_split(config, 'train')
    test = load_split(config, 'test', num_classes=train.num_classes)
    if not 0 <= args.sample < test.m:
        raise InvalidArgumentError(f"Sample-Index {args.sample} außerhalb [0, {test.m})")
    x = test.features[args.sample]

    rho = args.rho
    if rho is None:
        # zertifizierter Radius dieses Samples
        e = run_pipeline(train, pipeline)
        rho = evaluate(e, test.subset([args.sample]), rho_max=0).certificates[0].rho_bar
        status(args, f"🔎 Zertifizierter Radius von Sample {args.sample}: {rho}")

    status(args, f"🔎 Prüfe {args.threat} mit rho={rho} ...")
    try:
        if args.threat == 'label-flip':
            verdict = exhaustive_label_flip_verify(train, pipeline, x, rho, cap=cap, progress=not args.quiet)
        elif args.threat == 'removal':
            verdict = exhaustive_removal_verify(train, pipeline, x, rho, cap=cap, progress=not args.quiet)
        else:
            verdict = insertion_adversary_verify(train, pipeline, x, rho, seed=args.seed)
    except EnumerationCapExceeded as e:
        status(args, f"⛔ {e}")
        print_json({'threat': args.threat, 'rho': rho, 'verdict': 'refused',
                    'required': e.required, 'cap': e.cap})
        return EXIT_REFUSED

    print_json(verdict.to_json())
    if verdict.sound:
        status(args, f"✅ sound ({verdict.sets_checked} Mengen geprüft)")
        return EXIT_OK
    status(args, "❌ Gegenbeispiel gefunden")
    return EXIT_COUNTEREXAMPLE


def cmd_ra_compare(args):
    k = args.m / args.s if args.s else 0
    ra = ra_poison_prob(args.m, args.s, args.r)
    dpa = dpa_poison_bound(args.r, k)

    status(args, f"📐 m={args.m}, s={args.s}, r={args.r}: RA {ra:.3f} vs. DPA {dpa:.3f}")
    print_json({
        'm': args.m,
        's': args.s,
        'r': args.r,
        'k': k,
        'ra_probability': ra,
        'dpa_bound': dpa,
        'difference': ra - dpa,
        'ra_required_gap': required_vote_gap(ra),
        'dpa_required_gap': required_vote_gap(dpa),
    })
    return EXIT_OK


def cmd_binary2means(args):
    config = resolve_config(args)
    train = load_split(config, 'train')
    test = load_split(config, 'test', num_classes=train.num_classes)

    result = run_binary_experiment(train, test, args.class_a, args.class_b)
    status(args, f"✅ {args.class_a} gegen {args.class_b}: Genauigkeit {result['clean_accuracy']:.4f}, "
                 f"rho={result['rho_bar']} ({result['hypothesis']})")
    print_json(result)
    return EXIT_OK


# =============================================================================
# Einstieg
# =============================================================================

def build_parser():
    parser = argparse.ArgumentParser(
        prog='dpa',
        description='Zertifizierte Robustheit gegen Data Poisoning (DPA / SS-DPA)',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Beispiele:
  dpa train --config mnist.env --k 1200 --strategy ssdpa-sort
  dpa certify runs/mnist
  dpa curve runs/mnist --xlsx kurve.xlsx
  dpa verify --config toy.env --threat label-flip --sample 0 --rho 1
  dpa ra-compare 60000 50 200

Umgebung:
  DPA_CACHE_DIR  Modell-Cache (Standard ./data/cache)
  DPA_WORKERS    Standard für --workers
  LOG_LEVEL      DEBUG, INFO, WARNING, ...
        """
    )
    parser.add_argument('--workers', '-w', type=int, default=None, help='Parallele Trainingsprozesse')
    parser.add_argument('--quiet', '-q', action='store_true', help='Keine Status- und Fortschrittsausgaben')
    parser.add_argument('--cache-dir', help='Modell-Cache (überschreibt DPA_CACHE_DIR)')

    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('ingest', help='Datensatz einlesen und als Container speichern')
    p.add_argument('path')
    p.add_argument('--format', '-f', choices=DATASET_FORMATS, default='idx')
    p.add_argument('--labels', help='IDX-Labeldatei')
    p.add_argument('--num-classes', type=int)
    p.add_argument('--header', action='store_true', help='Erste CSV-Zeile überspringen')
    p.add_argument('--equalize', action='store_true')
    p.add_argument('--output', '-o', help='Zieldatei für den kanonischen Container')
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser('train', help='Partitionieren und alle Basis-Klassifikatoren trainieren')
    add_config_arguments(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('certify', help='Zertifikate für die Testmenge berechnen')
    p.add_argument('run_dir')
    p.add_argument('--test')
    p.add_argument('--test-labels')
    p.add_argument('--test-format', choices=DATASET_FORMATS)
    p.add_argument('--rho-max', type=int)
    p.add_argument('--output', '-o', help='Ausgabeordner (Standard: run_dir)')
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser('curve', help='Zertifizierte Genauigkeit aus den Zertifikaten')
    p.add_argument('run_dir')
    p.add_argument('--rho-max', type=int)
    p.add_argument('--output', '-o', help='Kurven-CSV (Standard: run_dir/curve.csv)')
    p.add_argument('--xlsx', help='Zusätzlich als Excel-Datei exportieren')
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser('verify', help='Zertifikat durch Angriffs-Aufzählung prüfen')
    add_config_arguments(p)
    p.add_argument('--threat', choices=['label-flip', 'removal', 'insertion'], default='label-flip')
    p.add_argument('--rho', type=int, help='Budget (Standard: zertifizierter Radius)')
    p.add_argument('--sample', type=int, default=0, help='Index in der Testmenge')
    p.add_argument('--cap', type=int, help='Maximale Anzahl aufgezählter Mengen')
    p.add_argument('--seed', type=int, default=0, help='Seed der Einfüge-Stichprobe')
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser('ra-compare', help='Randomized Ablation gegen DPA vergleichen')
    p.add_argument('m', type=int)
    p.add_argument('s', type=int)
    p.add_argument('r', type=int)
    p.set_defaults(func=cmd_ra_compare)

    p = sub.add_parser('binary2means', help='Binäre 2-means SS-DPA auf zwei Klassen')
    add_config_arguments(p)
    p.add_argument('--class-a', type=int, required=True)
    p.add_argument('--class-b', type=int, required=True)
    p.set_defaults(func=cmd_binary2means)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level='WARNING' if args.quiet else log_level(),
        format='%(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
    )

    try:
        if args.workers is None:
            args.workers = default_workers()
        return args.func(args)
    except DPAError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_ERROR
    except FileNotFoundError as e:
        print(f"❌ Datei nicht gefunden: {e.filename}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
