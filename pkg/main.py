import argparse
import json
import sys
from pathlib import Path

from src.diffusion.diffusion_core import exact_reconstruction_demo, parse_grid
from src.geometry.finger3d import unfold_finger
from src.geometry.poseproject import Canvas, RollPose, render_pose
from src.imaging.sauvola import binarize, estimate_foreground
from src.orchestrator.pipeline import load_batch_manifest, run_batch
from src.orchestrator.sweep import CommandQualityHook
from src.utils.config import Config, load_config, version_string
from src.utils.errors import FpforgeError
from src.utils.logger import ActionType, configure, console, log_experiment
from src.utils.tools import (
    read_cloud,
    read_mask,
    read_pgm,
    write_json,
    write_pgm,
    write_uv_map,
)

DEFAULTS = Config()
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _u64(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"entier attendu, reçu '{text}'")
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"graine hors de [0, 2^64) : {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None,
                        help="Fichier de configuration JSON (défaut : aucun)")
    common.add_argument("--json-log", action="store_true",
                        help="Messages console en JSON sur stderr (défaut : désactivé)")

    parser = argparse.ArgumentParser(
        prog="fpforge",
        description="fpforge - Simulation d'empreintes sans contact multi-poses"
    )
    parser.add_argument("--version", action="version", version=version_string())
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    sauvola = DEFAULTS.sauvola
    p = commands.add_parser("binarize", parents=[common], help="Binarisation de Sauvola")
    p.add_argument("--in", dest="input", required=True, help="Image PGM d'entrée")
    p.add_argument("--out", required=True, help="Carte binaire PGM de sortie")
    p.add_argument("--mask", default=None,
                   help="Masque de premier plan PGM (défaut : estimé sur l'image)")
    p.add_argument("--window", type=int, default=None, help=f"Taille de fenêtre impaire (défaut : {sauvola.w})")
    p.add_argument("--k", type=float, default=None, help=f"Coefficient k (défaut : {sauvola.k})")
    p.add_argument("--range", type=float, default=None, help=f"Dynamique R (défaut : {sauvola.R:g})")

    p = commands.add_parser("unfold", parents=[common], help="Dépliage UV d'un nuage 3D")
    p.add_argument("--cloud", required=True, help="Nuage de points (.ply ASCII ou .xyz)")
    p.add_argument("--out", required=True, help="Carte UV binaire (en-tête JSON à côté)")
    p.add_argument("--slab", type=float, default=None, help=f"Épaisseur de tranche en mm (défaut : {DEFAULTS.slab})")
    p.add_argument("--ppi", type=int, default=None, help=f"Résolution (défaut : {DEFAULTS.ppi})")
    p.add_argument("--no-rectify", action="store_true",
                   help="Ne pas redresser le nuage (défaut : redressement)")

    p = commands.add_parser("project", parents=[common], help="Rendu d'une pose de roulement")
    p.add_argument("--cloud", required=True, help="Nuage de points (.ply ASCII ou .xyz)")
    p.add_argument("--texture", required=True, help="Texture standard PGM")
    p.add_argument("--theta", type=float, required=True, help="Angle de roulement en degrés, |theta| <= 60")
    p.add_argument("--out", required=True, help="Image PGM de sortie (JSON annexe à côté)")
    p.add_argument("--canvas", type=int, default=None, help=f"Côté du canevas (défaut : {DEFAULTS.canvas})")
    p.add_argument("--slab", type=float, default=None, help=f"Épaisseur de tranche en mm (défaut : {DEFAULTS.slab})")

    p = commands.add_parser("sweep", parents=[common], help="Balayage des poses d'un lot d'identités")
    p.add_argument("--manifest-in", required=True, help="Manifeste JSON des identités")
    p.add_argument("--out", required=True, help="Dossier de sortie")
    p.add_argument("--seed", type=_u64, default=0, help="Graine du lot (défaut : 0)")
    p.add_argument("--workers", type=int, default=None,
                   help=f"Identités traitées en parallèle (défaut : FPFORGE_WORKERS ou {DEFAULTS.workers})")
    p.add_argument("--fg-threshold", type=float, default=None,
                   help=f"Taux de premier plan minimal, strict (défaut : {DEFAULTS.fg_threshold})")
    p.add_argument("--quality-cmd", default=None,
                   help="Scoreur de qualité externe (défaut : FPFORGE_QUALITY_CMD ou aucun)")

    p = commands.add_parser("ddim-demo", parents=[common], help="Reconstruction DDIM avec l'oracle exact")
    p.add_argument("--steps", type=int, default=None, help=f"Nombre de pas T (défaut : {DEFAULTS.ddim_steps})")
    p.add_argument("--grid", default="3x16x16", help="Grille latente CxHxW (défaut : 3x16x16)")
    p.add_argument("--seed", type=_u64, default=0, help="Graine du générateur PCG64 (défaut : 0)")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    """Options explicites de la ligne de commande, dans le schéma de Config."""
    return {
        "sauvola": {
            "w": getattr(args, "window", None),
            "k": getattr(args, "k", None),
            "R": getattr(args, "range", None),
        },
        "slab": getattr(args, "slab", None),
        "ppi": getattr(args, "ppi", None),
        "canvas": getattr(args, "canvas", None),
        "workers": getattr(args, "workers", None),
        "fg_threshold": getattr(args, "fg_threshold", None),
        "quality_cmd": getattr(args, "quality_cmd", None),
        "ddim_steps": getattr(args, "steps", None),
    }


def run_binarize(args, config: Config) -> int:
    img = read_pgm(args.input, config.ppi)
    if args.mask:
        mask = read_mask(args.mask)
    else:
        mask = estimate_foreground(img, config.foreground_block, config.foreground_std)
    result = binarize(img, mask, config.sauvola)
    write_pgm(args.out, result)
    log_experiment(
        "sauvola",
        ActionType.BINARIZE,
        details={
            "inputs": {"image": args.input, "mask": args.mask, "params": vars(config.sauvola)},
            "outputs": {"path": args.out, "ridge_pixels": int(result.foreground.sum())},
        },
        status="SUCCESS"
    )
    console(f"✓ Carte binaire écrite : {args.out}", "success")
    return EXIT_OK


def run_unfold(args, config: Config) -> int:
    surface = unfold_finger(read_cloud(args.cloud), config.slab, config.ppi, rectify=not args.no_rectify)
    header = write_uv_map(args.out, surface)
    log_experiment(
        "finger3d",
        ActionType.UNFOLD,
        details={"inputs": {"cloud": args.cloud, "slab": config.slab}, "outputs": header},
        status="SUCCESS" if surface.skipped_sections == 0 else "PARTIAL_SUCCESS"
    )
    if surface.skipped_sections:
        console(f"⚠️ {surface.skipped_sections} section(s) sans passage par x = 0 ignorée(s)", "warning")
    console(f"✓ Carte UV écrite : {args.out} ({header['assigned_count']} points)", "success")
    return EXIT_OK


def run_project(args, config: Config) -> int:
    pose = RollPose(args.theta)
    canvas = Canvas(config.canvas, config.canvas)
    surface = unfold_finger(read_cloud(args.cloud), config.slab, config.ppi)
    projected = render_pose(surface, read_pgm(args.texture, config.ppi), pose, canvas)
    write_pgm(args.out, projected.img)
    sidecar = {
        "theta": pose.theta,
        "delta_u_px": projected.delta_u,
        "rendered_pixel_count": projected.rendered_pixel_count,
    }
    write_json(str(Path(args.out).with_suffix(".json")), sidecar)
    log_experiment(
        "poseproject",
        ActionType.PROJECT,
        details={"inputs": {"cloud": args.cloud, "texture": args.texture, "theta": pose.theta},
                 "outputs": {"path": args.out, **sidecar}},
        status="SUCCESS"
    )
    console(f"✓ Pose {pose.theta:g}° rendue : {args.out} (Δu = {projected.delta_u:.2f} px)", "success")
    return EXIT_OK


def run_sweep(args, config: Config) -> int:
    inputs = load_batch_manifest(args.manifest_in)
    hook = CommandQualityHook(config.quality_cmd) if config.quality_cmd else None
    manifest = run_batch(
        inputs, config.sweep, args.out,
        seed=args.seed,
        workers=config.workers,
        fg_threshold=config.fg_threshold,
        quality_hook=hook,
        quality_threshold=config.quality_threshold,
        canvas=Canvas(config.canvas, config.canvas),
        slab=config.slab,
        ppi=config.ppi,
    )
    return EXIT_OK if manifest["counts"]["failed"] == 0 else EXIT_FAILURE


def run_ddim_demo(args, config: Config) -> int:
    summary = exact_reconstruction_demo(config.ddim_steps, parse_grid(args.grid), args.seed)
    log_experiment(
        "diffusion_core",
        ActionType.SAMPLE,
        details={"inputs": {"steps": config.ddim_steps, "grid": args.grid, "seed": args.seed},
                 "outputs": summary},
        status="SUCCESS"
    )
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "binarize": run_binarize,
    "unfold": run_unfold,
    "project": run_project,
    "sweep": run_sweep,
    "ddim-demo": run_ddim_demo,
}


def dispatch(argv=None) -> int:
    """Analyse les options, charge la configuration et lance la sous-commande."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_request:
        return int(exit_request.code or 0)

    configure(json_mode=args.json_log)
    try:
        config = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](args, config)
    except ValueError as error:
        console(f"❌ Paramètre invalide : {error}", "error", command=args.command)
        return EXIT_USAGE
    except (OSError, FpforgeError) as error:
        console(f"❌ Échec : {error}", "error", command=args.command)
        return EXIT_FAILURE


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
