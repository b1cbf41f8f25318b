from ._base import LabCommand


class Command(LabCommand):
    help = "Pull-through residuals and coherent-part decomposition per photon mode."
    pipeline = "pull_through"
