"""
Writes the desk-scale datasets used with the stub backends.

Usage:
    python scripts/build_toy_corpus.py --out data

Produces:
    data/toy_ethics.csv      64 labeled sentences (label,input; 1 = immoral)
    data/images/             16 synthetic PNGs plus manifest.csv (8 red immoral, 8 blue moral)
    data/likert.csv          sample human-study ratings (evaluator_id,image_id,condition,rating)

Train on it with:
    python main.py train data/toy_ethics.csv --config configs/stub.yaml
"""
import os
import sys
import argparse
import logging

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.infrastructure.toy_data import (
    sample_likert_records,
    synthetic_images,
    toy_corpus,
    write_image_manifest,
    write_labeled_csv,
    write_likert_csv,
)

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def main():
    parser = argparse.ArgumentParser(description='Build the toy corpus, synthetic images and sample Likert ratings')
    parser.add_argument('--out', default='data', help='Output directory')
    parser.add_argument('--evaluators', type=int, default=6, help='Evaluators in the sample Likert file')
    parser.add_argument('--seed', type=int, default=0, help='Seed for the sample Likert ratings')
    args = parser.parse_args()

    corpus = write_labeled_csv(os.path.join(args.out, 'toy_ethics.csv'), toy_corpus())
    manifest = write_image_manifest(os.path.join(args.out, 'images'), synthetic_images())
    likert = write_likert_csv(os.path.join(args.out, 'likert.csv'),
                              sample_likert_records(evaluators=args.evaluators, seed=args.seed))

    logger.info("Toy datasets ready:")
    for path in (corpus, manifest, likert):
        print(f"  {path}")


if __name__ == '__main__':
    main()
