from ._base import LabCommand


class Command(LabCommand):
    help = "Closed-form cloud norms, angular constant and vacuum field energy per sigma."
    pipeline = "kernel_norm"
