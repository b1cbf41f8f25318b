from ._base import LabCommand


class Command(LabCommand):
    help = "Cell decompositions along the cutoff schedule and their cloud-overlap statistic."
    pipeline = "scattering_cells"
