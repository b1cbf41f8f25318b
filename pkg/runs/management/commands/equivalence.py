from ._base import LabCommand


class Command(LabCommand):
    help = "Fock versus coherent representation verdict from the kernel norm slope."
    pipeline = "equivalence"
