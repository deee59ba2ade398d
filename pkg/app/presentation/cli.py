"""
Command-line surface: train, judge, explain, manipulate and eval.

Every command prints its report as JSON on stdout; logs go to stderr.
Exit codes: 0 success (a still-immoral result is data, not failure),
2 usage or input error, 3 backend failure.
"""
import argparse
import logging
import sys
from typing import List, Optional

from app.application.pipeline_service import PipelineService
from app.domain.errors import BackendError, MoralLensError
from app.domain.models import Strategy
from app.infrastructure.config_loader import load_pipeline_config
from app.infrastructure.report_writer import TOOL_VERSION, dumps_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BACKEND = 3


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Pipeline config file (YAML)')
    common.add_argument('--seed', type=int, help='Seed for every random draw of the run')
    common.add_argument('--out', dest='output_dir', help='Directory for reports, PNGs and the head file')
    common.add_argument('--backend', choices=('stub', 'external'), help='Backend kind for every role')
    common.add_argument('--endpoint', help='Base URL for external backends')
    common.add_argument('--threshold', type=float, help='Judge threshold in (0,1)')
    common.add_argument('--head', dest='head_path', help='Classifier head file (default <out>/head.bin)')
    return common


def _input_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--image', help='Input PNG')
    parser.add_argument('--prompt', help='Input prompt (lowercased and split into words)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='moral-lens',
        description='Judge, explain and manipulate commonsense immorality in images and prompts',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {TOOL_VERSION}')
    common = _common_flags()
    commands = parser.add_subparsers(dest='command', required=True)

    train = commands.add_parser('train', parents=[common], help='Train the classifier head on labeled text')
    train.add_argument('csv', help='CSV with label and input columns (1 = immoral)')
    train.add_argument('--label-column', default='label')
    train.add_argument('--text-column', default='input')

    judge = commands.add_parser('judge', parents=[common], help='Score an image or prompt')
    _input_flags(judge)

    explain = commands.add_parser('explain', parents=[common], help='Word importance and saliency heatmap')
    _input_flags(explain)

    manipulate = commands.add_parser('manipulate', parents=[common], help='Rewrite an immoral image')
    _input_flags(manipulate)
    manipulate.add_argument('--strategy', choices=[s.key for s in Strategy.selectable()],
                            help='Manipulation strategy (default from config, normally auto)')

    evaluate = commands.add_parser('eval', parents=[common], help='Run the datasets listed in an eval spec')
    evaluate.add_argument('spec', help='YAML file listing datasets')
    evaluate.add_argument('--table', action='store_true', help='Print the text table instead of JSON')
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    return {
        'seed': args.seed,
        'output_dir': args.output_dir,
        'backend': args.backend,
        'endpoint': args.endpoint,
        'threshold': args.threshold,
        'head_path': args.head_path,
        'strategy': getattr(args, 'strategy', None),
    }


def run(args: argparse.Namespace) -> dict:
    config = load_pipeline_config(args.config, _overrides(args))
    service = PipelineService(config)
    if args.command == 'train':
        return service.train(args.csv, args.label_column, args.text_column)
    if args.command == 'judge':
        return service.judge(args.image, args.prompt)
    if args.command == 'explain':
        return service.explain(args.image, args.prompt)
    if args.command == 'manipulate':
        return service.manipulate(args.image, args.prompt, args.strategy)
    return service.evaluate(args.spec)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        doc = run(args)
    except BackendError as e:
        logger.error(f"Backend failure: {e}")
        sys.stderr.write(f"moral-lens: backend error: {e}\n")
        return EXIT_BACKEND
    except (MoralLensError, ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        sys.stderr.write(f"moral-lens: error: {e}\n")
        return EXIT_USAGE

    if args.command == 'eval' and args.table:
        with open(doc['table'], encoding='utf-8') as f:
            sys.stdout.write(f.read())
    else:
        sys.stdout.write(dumps_report(doc))
    return EXIT_OK
