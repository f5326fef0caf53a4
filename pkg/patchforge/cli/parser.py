import argparse

from patchforge import __version__


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--preset", help="bundled preset to start from (default: toy)")
    parser.add_argument("--config", help="JSON run config merged over the preset")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key, e.g. train.step_size=0.01")
    parser.add_argument("--out", help="run directory")
    parser.add_argument("--seed", type=int, help="run seed")
    parser.add_argument("--data", help="Cityscapes-layout dataset root (default: synthetic shapes)")
    parser.add_argument("--progress", action="store_true", help="show progress bars")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchforge",
        description="EOT adversarial patches against semantic segmentation models",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    pretrain = commands.add_parser("pretrain-toy", help="train a toy segmentation model")
    _common(pretrain)
    pretrain.add_argument("--model", action="append", metavar="NAME", help="tiny_cnn or tiny_attention")

    train = commands.add_parser("train-patch", help="train an adversarial patch against one model")
    _common(train)
    train.add_argument("--model", action="append", metavar="NAME[@WEIGHTS]", help="model to attack")
    train.add_argument("--epochs", type=int, help="number of training epochs")
    train.add_argument("--tag", help="artifact name (default: model name)")
    train.add_argument("--resume", action="store_true", help="continue from checkpoint.apf in the run directory")

    for name, help_text in (
        ("eval", "evaluate patches against models"),
        ("transfer", "patch x model transfer matrix"),
    ):
        sub = commands.add_parser(name, help=help_text)
        _common(sub)
        sub.add_argument("--model", action="append", metavar="NAME[@WEIGHTS]", help="model column (repeatable)")
        sub.add_argument("--patch", action="append", metavar="DIR.apf", help="patch artifact (repeatable)")
        sub.add_argument("--save-predictions", type=int, metavar="N", help="write prediction panels for the first N images")
        sub.add_argument("--workers", type=int, help="evaluate model columns in parallel")
        sub.add_argument(
            "--assert-diagonal",
            action="store_true",
            help="exit 1 unless every patch hurts its own model most",
        )

    plot = commands.add_parser("plot", help="write figures for finished runs")
    plot.add_argument("run_dirs", nargs="+", help="run directories")
    plot.add_argument("--out", help="figure directory (default: <first run>/figures)")
    plot.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser
