"""A toy shopping cart."""

from dataclasses import dataclass


class OutOfStock(Exception):
    pass


@dataclass
class Item:
    sku: str
    price: int
    quantity: int = 1

    def subtotal(self):
        return self.price * self.quantity


class Inventory:
    """Stock levels keyed by sku."""

    def __init__(self, stock=None):
        self.stock = dict(stock or {})
        self.reserved = {}

    def available(self, sku):
        return self.stock.get(sku, 0) - self.reserved.get(sku, 0)

    def reserve(self, sku, quantity):
        if quantity <= 0:
            raise ValueError("quantity must be positive")
        if self.available(sku) < quantity:
            raise OutOfStock(sku)
        self.reserved[sku] = self.reserved.get(sku, 0) + quantity

    def release(self, sku, quantity):
        held = self.reserved.get(sku, 0)
        if quantity > held:
            raise ValueError("releasing more than reserved")
        self.reserved[sku] = held - quantity
        if self.reserved[sku] == 0:
            self.reserved.pop(sku)

    def restock(self, sku, quantity):
        self.stock[sku] = self.stock.get(sku, 0) + quantity
        return self.stock[sku]


class Cart:
    def __init__(self, inventory, discount=0):
        self.inventory = inventory
        self.discount = discount
        self.items = []

    def add(self, sku, price, quantity=1):
        self.inventory.reserve(sku, quantity)
        for item in self.items:
            if item.sku == sku:
                item.quantity += quantity
                return item
        item = Item(sku, price, quantity)
        self.items.append(item)
        return item

    def remove(self, sku):
        for index, item in enumerate(self.items):
            if item.sku == sku:
                self.inventory.release(sku, item.quantity)
                del self.items[index]
                return True
        return False

    def count(self):
        return sum(item.quantity for item in self.items)

    def subtotal(self):
        return sum(item.subtotal() for item in self.items)

    def total(self):
        subtotal = self.subtotal()
        if self.discount > 0:
            subtotal = subtotal - subtotal * self.discount // 100
        return subtotal

    def most_expensive(self):
        best = None
        for item in self.items:
            if best is None or item.price > best.price:
                best = item
        return best

    def split_by_price(self, threshold):
        cheap = [i.sku for i in self.items if i.price < threshold]
        dear = [i.sku for i in self.items if i.price >= threshold]
        return cheap, dear
