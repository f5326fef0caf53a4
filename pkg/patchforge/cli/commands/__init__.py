from patchforge.cli.commands.evaluate import cmd_eval, cmd_transfer
from patchforge.cli.commands.plot import cmd_plot
from patchforge.cli.commands.pretrain import cmd_pretrain_toy
from patchforge.cli.commands.train import cmd_train_patch

COMMANDS = {
    "pretrain-toy": cmd_pretrain_toy,
    "train-patch": cmd_train_patch,
    "eval": cmd_eval,
    "transfer": cmd_transfer,
    "plot": cmd_plot,
}

__all__ = ["COMMANDS", "cmd_eval", "cmd_plot", "cmd_pretrain_toy", "cmd_train_patch", "cmd_transfer"]
